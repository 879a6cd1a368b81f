#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "showthru/image.hpp"
#include "showthru/rng.hpp"

namespace testsupport {

/// Fresh scratch directory under the system temp root; removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("showthru_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline showthru::ImageGray random_image(int w, int h, uint64_t seed,
                                        double lo = 0.0, double hi = 1.0) {
  showthru::Rng rng(seed);
  showthru::ImageGray img(w, h);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

/// Smooth band-limited test image (sum of low-frequency sinusoids), values
/// well inside [0,1]; suitable for sub-pixel alignment constructions.
inline showthru::ImageGray smooth_image(int w, int h, uint64_t seed) {
  showthru::Rng rng(seed);
  struct Wave {
    double fx, fy, phase, amp;
  };
  // half slow undulation, half mid-band texture so block correlation has a
  // sharp, unambiguous peak
  Wave waves[10];
  double total = 0.0;
  for (int i = 0; i < 10; ++i) {
    Wave& wv = waves[i];
    const double lo = i < 5 ? 0.02 : 0.12;
    const double hi = i < 5 ? 0.08 : 0.45;
    wv.fx = rng.uniform(lo, hi) * (rng.below(2) ? 1.0 : -1.0);
    wv.fy = rng.uniform(lo, hi) * (rng.below(2) ? 1.0 : -1.0);
    wv.phase = rng.uniform(0.0, 6.283185307179586);
    wv.amp = rng.uniform(0.5, 1.0);
    total += wv.amp;
  }
  showthru::ImageGray img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double v = 0.0;
      for (const Wave& wv : waves)
        v += wv.amp * std::sin(wv.fx * c + wv.fy * r + wv.phase);
      img.at(r, c) = 0.5 + 0.45 * v / total;
    }
  return img;
}

/// The moving image for a known sub-pixel shift: content displaced by
/// (sx, sy) pixels, sampled bicubically from the reference.
inline showthru::ImageGray bicubic_shift(const showthru::ImageGray& src,
                                         double sx, double sy) {
  showthru::ImageGray out(src.width, src.height);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      out.at(r, c) = showthru::bicubic_sample(src, c - sx, r - sy);
  return out;
}

}  // namespace testsupport
