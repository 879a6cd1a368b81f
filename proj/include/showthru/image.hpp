#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace showthru {

/// Grayscale raster, row-major, intensities nominally in [0,1].
/// File I/O and pair normalization enforce the unit range; separated
/// components may temporarily carry values outside it.
struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ImageGray() = default;
  ImageGray(int w, int h, double fill = 0.0)
      : width(w), height(h), data(size_t(w) * size_t(h), fill) {}

  double& at(int r, int c) { return data[size_t(r) * width + c]; }
  double at(int r, int c) const { return data[size_t(r) * width + c]; }

  /// Clamp-to-edge read; defined for any (r, c).
  double at_clamped(int r, int c) const;

  size_t pixel_count() const { return data.size(); }
  bool same_size(const ImageGray& o) const {
    return width == o.width && height == o.height;
  }
};

/// Paired intensity samples drawn from a co-registered image pair.
struct PixelPairSet {
  std::vector<std::array<double, 2>> samples;
  std::vector<std::array<int, 2>> indices;  // (row, col) per sample
  uint64_t seed = 0;
};

/// Loads an 8- or 16-bit grayscale PNG or binary PGM (P5), mapping stored
/// integers linearly onto [0,1].  Color input is rejected.
ImageGray load_grayscale(const std::string& path);

/// Writes a grayscale PNG or PGM, quantizing to 2^bits levels (bits = 8 or
/// 16); values are clamped to [0,1] first.
void save_grayscale(const ImageGray& image, const std::string& path,
                    int bits = 8);

ImageGray flip_horizontal(const ImageGray& image);

/// Clockwise quarter-turn; output dimensions are swapped.
ImageGray rotate90(const ImageGray& image);

/// Applies one affine map to both images so the joint minimum becomes 0 and
/// the joint maximum becomes 1.  Errors on a jointly constant pair.
std::pair<ImageGray, ImageGray> normalize_pair(const ImageGray& a,
                                               const ImageGray& b);

/// n distinct pixel locations drawn uniformly (without replacement),
/// optionally disjoint from `exclude`; deterministic given seed.
PixelPairSet sample_pixel_pairs(const ImageGray& a, const ImageGray& b, int n,
                                uint64_t seed,
                                const PixelPairSet* exclude = nullptr);

/// Catmull-Rom bicubic point sample at (x, y) in pixel-center coordinates;
/// out-of-range taps clamp to the border.  Not range-clipped.
double bicubic_sample(const ImageGray& image, double x, double y);

/// Bicubic rescale by `factor` (> 0); output clipped to [0,1].
ImageGray bicubic_resample(const ImageGray& image, double factor);

/// Affine display stretch saturating the 1% darkest and 1% brightest pixels.
/// Display use only; never feed the result into quality measures.
ImageGray display_normalize(const ImageGray& image);

}  // namespace showthru
