#pragma once

// Grid tiling and resizing of samples, carrying annotations along.

#include <vector>

#include "lupi/geometry.hpp"

namespace lupi {

struct TileSpec {
  /// K in the K x K grid.
  int grid = 3;
  /// Minimum fraction of an annotation's area that must survive clipping.
  double min_visibility = 0.25;
  /// Minimum side length in pixels of a clipped annotation.
  double min_side_px = 2.0;

  void validate() const;
};

/// Splits s into grid*grid tiles in row-major order with ids suffixed
/// "_r{row}_c{col}". Tile sizes are floor(W/K), floor(H/K); the last column
/// and row absorb the remainder. Annotations are clipped per tile and kept
/// when they satisfy the visibility and side-length rules, in tile-local
/// coordinates. Pixel data is an exact crop.
/// Throws std::invalid_argument if the image is smaller than the grid or
/// already carries a privileged plane.
std::vector<ImageSample> tile_image(const ImageSample& s, const TileSpec& spec);

/// Bilinear resample (pixel-center aligned) of every plane to out_w x out_h.
/// Boxes are scaled by (out_w/width, out_h/height); boxes thinner than 1 px
/// after scaling are dropped.
ImageSample resize_sample(const ImageSample& s, int out_w, int out_h);

}  // namespace lupi
