#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "showthru/image.hpp"

namespace showthru {

/// Per-block displacements from local alignment, in units of 1/upsample of
/// an original pixel (quarter-pixels by default).
struct DisplacementField {
  int blocks_x = 0;
  int blocks_y = 0;
  int block_size = 25;    // original-image pixels per block side
  int upsample = 4;
  int search_radius = 16; // quarter-pixels

  struct Cell {
    int dx = 0;
    int dy = 0;
    bool flagged = false;  // zero-variance block, displacement defaulted
  };
  std::vector<Cell> cells;  // row-major, blocks_y x blocks_x

  Cell& cell(int by, int bx) { return cells[size_t(by) * blocks_x + bx]; }
  const Cell& cell(int by, int bx) const {
    return cells[size_t(by) * blocks_x + bx];
  }

  nlohmann::json to_json() const;
  static DisplacementField from_json(const nlohmann::json& doc);
};

/// Integer translation of the image content by (dx, dy); vacated margins are
/// filled with nearest-edge replication, dimensions unchanged.
ImageGray coarse_shift(const ImageGray& image, int dx, int dy);

struct BlockMatchResult {
  int dx = 0;
  int dy = 0;
  double score = 0.0;
  bool flagged = false;
};

/// Finds the offset of `moving_block` inside `reference_region` (which must
/// extend the block by `search_radius` on every side) that maximizes
/// zero-mean normalized cross-correlation.  Ties break toward the smallest
/// Euclidean displacement, then row-major candidate order.  Zero-variance
/// blocks are flagged and report (0, 0, 0).
BlockMatchResult block_match(const ImageGray& reference_region,
                             const ImageGray& moving_block, int search_radius);

/// Local block alignment: both images are upsampled bicubically, the moving
/// image is partitioned into (upsample * block_size)^2 squares, each square
/// is matched against the reference within +/- search_radius, the moving
/// image is rebuilt from the displaced blocks and downsampled back.
std::pair<ImageGray, DisplacementField> local_align(const ImageGray& reference,
                                                    const ImageGray& moving,
                                                    int block_size = 25,
                                                    int upsample = 4,
                                                    int search_radius = 16);

}  // namespace showthru
