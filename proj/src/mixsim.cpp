#include "showthru/mixsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "showthru/rng.hpp"

namespace showthru {

void MixParams::validate() const {
  if (!(q > 0.0 && q <= 1.0))
    throw std::invalid_argument("MixParams: q must be in (0,1]");
  if (!(gamma >= 1.0))
    throw std::invalid_argument("MixParams: gamma must be >= 1");
  if (!(sigma >= 0.0))
    throw std::invalid_argument("MixParams: sigma must be >= 0");
  if (levels < 2) throw std::invalid_argument("MixParams: levels must be >= 2");
}

std::pair<ImageGray, ImageGray> generate_bars_pair(int n_bars, int size,
                                                   uint64_t seed) {
  if (n_bars < 2) throw std::invalid_argument("generate_bars_pair: need >= 2 bars");
  if (size < n_bars)
    throw std::invalid_argument("generate_bars_pair: size smaller than bar count");

  std::vector<double> levels(n_bars);
  for (int i = 0; i < n_bars; ++i) levels[i] = double(i) / (n_bars - 1);
  Rng rng(seed);
  for (int i = n_bars - 1; i > 0; --i)
    std::swap(levels[i], levels[rng.below(uint64_t(i) + 1)]);

  ImageGray first(size, size);
  for (int c = 0; c < size; ++c) {
    const int bar = int((int64_t(c) * n_bars) / size);
    const double v = levels[bar];
    for (int r = 0; r < size; ++r) first.at(r, c) = v;
  }
  return {first, rotate90(first)};
}

std::pair<ImageGray, ImageGray> mix_showthrough_noiseless(const ImageGray& s1,
                                                          const ImageGray& s2,
                                                          const MixParams& p) {
  p.validate();
  if (!s1.same_size(s2))
    throw std::invalid_argument("mix_showthrough: dimension mismatch");
  ImageGray m1(s1.width, s1.height), m2(s1.width, s1.height);
  const size_t n = s1.pixel_count();
  for (size_t i = 0; i < n; ++i) {
    const double a = s1.data[i];
    const double b = s2.data[i];
    m1.data[i] = a * (p.q + (1.0 - p.q) * std::pow(b, p.gamma));
    m2.data[i] = b * (p.q + (1.0 - p.q) * std::pow(a, p.gamma));
  }
  return {std::move(m1), std::move(m2)};
}

std::pair<ImageGray, ImageGray> mix_showthrough(const ImageGray& s1,
                                                const ImageGray& s2,
                                                const MixParams& p) {
  auto [m1, m2] = mix_showthrough_noiseless(s1, s2, p);
  m1 = add_acquisition_noise(m1, p.sigma, p.levels, derive_seed(p.seed, "noise_1"));
  m2 = add_acquisition_noise(m2, p.sigma, p.levels, derive_seed(p.seed, "noise_2"));
  return {std::move(m1), std::move(m2)};
}

ImageGray add_acquisition_noise(const ImageGray& image, double sigma,
                                int levels, uint64_t seed) {
  if (!(sigma >= 0.0))
    throw std::invalid_argument("add_acquisition_noise: sigma must be >= 0");
  if (levels < 2)
    throw std::invalid_argument("add_acquisition_noise: levels must be >= 2");
  ImageGray out = image;
  const double steps = levels - 1;
  const size_t n = out.pixel_count();
  for (size_t i = 0; i < n; ++i) {
    double v = out.data[i];
    if (sigma > 0.0) v += sigma * gaussian_at(seed, i);
    v = std::clamp(v, 0.0, 1.0);
    out.data[i] = std::lround(v * steps) / steps;
  }
  return out;
}

std::pair<ImageGray, ImageGray> invert_showthrough(const ImageGray& m1,
                                                   const ImageGray& m2,
                                                   const MixParams& p) {
  p.validate();
  if (!m1.same_size(m2))
    throw std::invalid_argument("invert_showthrough: dimension mismatch");
  constexpr int kMaxIter = 1000;
  constexpr double kTol = 1e-13;
  ImageGray s1 = m1, s2 = m2;
  const size_t n = m1.pixel_count();
  for (size_t i = 0; i < n; ++i) {
    double a = m1.data[i];
    double b = m2.data[i];
    const double ma = a, mb = b;
    bool converged = false;
    for (int it = 0; it < kMaxIter; ++it) {
      const double na = ma / (p.q + (1.0 - p.q) * std::pow(b, p.gamma));
      const double nb = mb / (p.q + (1.0 - p.q) * std::pow(a, p.gamma));
      const double delta = std::max(std::fabs(na - a), std::fabs(nb - b));
      a = na;
      b = nb;
      if (!std::isfinite(a) || !std::isfinite(b)) break;
      if (delta < kTol) {
        converged = true;
        break;
      }
    }
    if (!converged || a < -1e-9 || a > 1.0 + 1e-9 || b < -1e-9 || b > 1.0 + 1e-9)
      throw std::runtime_error(
          "invert_showthrough: fixed-point iteration did not converge to a "
          "source pair in [0,1]^2 (input outside the mixture range?)");
    s1.data[i] = std::clamp(a, 0.0, 1.0);
    s2.data[i] = std::clamp(b, 0.0, 1.0);
  }
  return {std::move(s1), std::move(s2)};
}

}  // namespace showthru
