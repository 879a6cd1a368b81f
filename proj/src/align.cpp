#include "showthru/align.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace showthru {

namespace {

// Resampling leaves ~1e-16 dust on flat regions, so "zero variance" means a
// value range far below any real contrast (one 16-bit step is 1.5e-5).
bool is_flat(const ImageGray& img) {
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  return *hi - *lo < 1e-9;
}

// Inclusive-exclusive rectangle sum over an (h+1)x(w+1) integral image.
double rect_sum(const std::vector<double>& integral, int stride, int r0,
                int c0, int r1, int c1) {
  return integral[size_t(r1) * stride + c1] -
         integral[size_t(r0) * stride + c1] -
         integral[size_t(r1) * stride + c0] +
         integral[size_t(r0) * stride + c0];
}

}  // namespace

nlohmann::json DisplacementField::to_json() const {
  nlohmann::json grid = nlohmann::json::array();
  for (int by = 0; by < blocks_y; ++by) {
    nlohmann::json row = nlohmann::json::array();
    for (int bx = 0; bx < blocks_x; ++bx) {
      const Cell& c = cell(by, bx);
      row.push_back({c.dx, c.dy, c.flagged ? 1 : 0});
    }
    grid.push_back(row);
  }
  return {{"block_size", block_size}, {"upsample", upsample},
          {"search_radius", search_radius}, {"blocks_x", blocks_x},
          {"blocks_y", blocks_y}, {"grid", grid}};
}

DisplacementField DisplacementField::from_json(const nlohmann::json& doc) {
  DisplacementField f;
  f.block_size = doc.at("block_size").get<int>();
  f.upsample = doc.at("upsample").get<int>();
  f.search_radius = doc.at("search_radius").get<int>();
  f.blocks_x = doc.at("blocks_x").get<int>();
  f.blocks_y = doc.at("blocks_y").get<int>();
  const nlohmann::json& grid = doc.at("grid");
  if (int(grid.size()) != f.blocks_y)
    throw std::runtime_error("displacement field: bad grid height");
  f.cells.resize(size_t(f.blocks_x) * f.blocks_y);
  for (int by = 0; by < f.blocks_y; ++by) {
    if (int(grid[by].size()) != f.blocks_x)
      throw std::runtime_error("displacement field: bad grid width");
    for (int bx = 0; bx < f.blocks_x; ++bx) {
      const auto& t = grid[by][bx];
      f.cell(by, bx) = {t.at(0).get<int>(), t.at(1).get<int>(),
                        t.at(2).get<int>() != 0};
    }
  }
  return f;
}

ImageGray coarse_shift(const ImageGray& image, int dx, int dy) {
  if (std::abs(dx) >= image.width || std::abs(dy) >= image.height)
    throw std::invalid_argument(
        "coarse_shift: shift magnitude must be smaller than the image size");
  ImageGray out(image.width, image.height);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      out.at(r, c) = image.at_clamped(r - dy, c - dx);
  return out;
}

BlockMatchResult block_match(const ImageGray& reference_region,
                             const ImageGray& moving_block,
                             int search_radius) {
  const int bw = moving_block.width;
  const int bh = moving_block.height;
  const int radius = search_radius;
  if (radius < 0) throw std::invalid_argument("block_match: negative radius");
  if (reference_region.width != bw + 2 * radius ||
      reference_region.height != bh + 2 * radius)
    throw std::invalid_argument(
        "block_match: reference region must extend the block by the search "
        "radius on every side");

  if (is_flat(moving_block) || is_flat(reference_region))
    return {0, 0, 0.0, true};

  const size_t npix = moving_block.pixel_count();
  double block_mean = 0.0;
  for (double v : moving_block.data) block_mean += v;
  block_mean /= double(npix);
  double block_ss = 0.0;
  for (double v : moving_block.data)
    block_ss += (v - block_mean) * (v - block_mean);

  // Integral images over the region for O(1) window sums.
  const int rw = reference_region.width;
  const int rh = reference_region.height;
  const int stride = rw + 1;
  std::vector<double> s1(size_t(rh + 1) * stride, 0.0);
  std::vector<double> s2(size_t(rh + 1) * stride, 0.0);
  for (int r = 0; r < rh; ++r) {
    double row1 = 0.0, row2 = 0.0;
    for (int c = 0; c < rw; ++c) {
      const double v = reference_region.at(r, c);
      row1 += v;
      row2 += v * v;
      s1[size_t(r + 1) * stride + c + 1] = s1[size_t(r) * stride + c + 1] + row1;
      s2[size_t(r + 1) * stride + c + 1] = s2[size_t(r) * stride + c + 1] + row2;
    }
  }

  BlockMatchResult best{0, 0, -2.0, false};
  long best_d2 = 0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int r0 = radius + dy;
      const int c0 = radius + dx;
      const double sum_r = rect_sum(s1, stride, r0, c0, r0 + bh, c0 + bw);
      const double sum_rr = rect_sum(s2, stride, r0, c0, r0 + bh, c0 + bw);
      const double var_term = sum_rr - sum_r * sum_r / double(npix);
      double score = 0.0;
      if (var_term > 0.0) {
        double dot = 0.0;
        for (int r = 0; r < bh; ++r) {
          const double* mrow = &moving_block.data[size_t(r) * bw];
          const double* rrow =
              &reference_region.data[size_t(r0 + r) * rw + c0];
          for (int c = 0; c < bw; ++c) dot += mrow[c] * rrow[c];
        }
        const double cross = dot - block_mean * sum_r;
        score = cross / std::sqrt(block_ss * var_term);
      }
      const long d2 = long(dx) * dx + long(dy) * dy;
      if (score > best.score ||
          (score == best.score && d2 < best_d2)) {
        best.dx = dx;
        best.dy = dy;
        best.score = score;
        best_d2 = d2;
      }
    }
  }
  return best;
}

std::pair<ImageGray, DisplacementField> local_align(const ImageGray& reference,
                                                    const ImageGray& moving,
                                                    int block_size,
                                                    int upsample,
                                                    int search_radius) {
  if (!reference.same_size(moving))
    throw std::invalid_argument("local_align: dimension mismatch");
  if (block_size < 1 || upsample < 1 || search_radius < 0)
    throw std::invalid_argument("local_align: bad parameters");

  const ImageGray ref_up = bicubic_resample(reference, double(upsample));
  const ImageGray mov_up = bicubic_resample(moving, double(upsample));
  const int w = mov_up.width;
  const int h = mov_up.height;
  const int side = block_size * upsample;

  DisplacementField field;
  field.block_size = block_size;
  field.upsample = upsample;
  field.search_radius = search_radius;
  field.blocks_x = (w + side - 1) / side;
  field.blocks_y = (h + side - 1) / side;
  field.cells.resize(size_t(field.blocks_x) * field.blocks_y);

  ImageGray rebuilt(w, h);
  for (int by = 0; by < field.blocks_y; ++by) {
    for (int bx = 0; bx < field.blocks_x; ++bx) {
      const int x0 = bx * side;
      const int y0 = by * side;
      const int bw = std::min(side, w - x0);
      const int bh = std::min(side, h - y0);

      ImageGray block(bw, bh);
      for (int r = 0; r < bh; ++r)
        for (int c = 0; c < bw; ++c) block.at(r, c) = mov_up.at(y0 + r, x0 + c);

      ImageGray region(bw + 2 * search_radius, bh + 2 * search_radius);
      for (int r = 0; r < region.height; ++r)
        for (int c = 0; c < region.width; ++c)
          region.at(r, c) =
              ref_up.at_clamped(y0 - search_radius + r, x0 - search_radius + c);

      const BlockMatchResult m = block_match(region, block, search_radius);
      field.cell(by, bx) = {m.dx, m.dy, m.flagged};

      // The block's content belongs at its nominal position plus the
      // recovered displacement, so read it back from the opposite offset.
      for (int r = 0; r < bh; ++r)
        for (int c = 0; c < bw; ++c)
          rebuilt.at(y0 + r, x0 + c) =
              mov_up.at_clamped(y0 + r - m.dy, x0 + c - m.dx);
    }
  }

  ImageGray aligned = bicubic_resample(rebuilt, 1.0 / double(upsample));
  return {std::move(aligned), std::move(field)};
}

}  // namespace showthru
