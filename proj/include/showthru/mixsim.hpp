#pragma once

#include <cstdint>
#include <utility>

#include "showthru/image.hpp"

namespace showthru {

/// Parameters of the synthetic point-wise show-through mixture.
///   q      fraction of front intensity remaining over solid back black
///   gamma  nonlinearity exponent of the back-page attenuation
///   sigma  acquisition noise standard deviation (intensity units)
///   levels acquisition quantization levels
struct MixParams {
  double q = 0.6;
  double gamma = 2.0;
  double sigma = 0.01;
  int levels = 256;
  uint64_t seed = 0;

  void validate() const;
};

/// Bar-chart source pair: `n_bars` vertical bars whose intensities are
/// uniformly spaced between black and white in a seeded random order; the
/// second image is the first rotated by 90 degrees, so the two intensity
/// fields are independent by construction.
std::pair<ImageGray, ImageGray> generate_bars_pair(int n_bars, int size,
                                                   uint64_t seed);

/// Noiseless mixture core:
///   m1 = s1 * (q + (1-q) * s2^gamma),  m2 = s2 * (q + (1-q) * s1^gamma).
/// Exactly exchange-symmetric and invertible on (0,1]^2 for q > 0.
std::pair<ImageGray, ImageGray> mix_showthrough_noiseless(const ImageGray& s1,
                                                          const ImageGray& s2,
                                                          const MixParams& p);

/// Full mixture: noiseless core followed by independent seeded acquisition
/// noise and quantization on each channel.
std::pair<ImageGray, ImageGray> mix_showthrough(const ImageGray& s1,
                                                const ImageGray& s2,
                                                const MixParams& p);

/// Adds counter-seeded Gaussian noise (std sigma), clips to [0,1], and
/// quantizes to `levels` uniform levels.
ImageGray add_acquisition_noise(const ImageGray& image, double sigma,
                                int levels, uint64_t seed);

/// Ground-truth inverse of the noiseless mixture via fixed-point iteration.
/// Reference oracle for tests, not a separator.  Errors when the iteration
/// fails to converge to a source pair inside [0,1]^2.
std::pair<ImageGray, ImageGray> invert_showthrough(const ImageGray& m1,
                                                   const ImageGray& m2,
                                                   const MixParams& p);

}  // namespace showthru
