#pragma once

#include <cstddef>
#include <vector>

#include "colornorm/image.hpp"

namespace colornorm {

struct Tile {
  std::size_t x = 0;  // top-left corner on the padded canvas
  std::size_t y = 0;
  ImageRGB image;
};

/// Row-major tiles that exactly partition the reflect-padded canvas.
struct TileGrid {
  std::size_t tile_size = 0;
  std::size_t width = 0;  // original image size
  std::size_t height = 0;
  std::size_t padded_width = 0;
  std::size_t padded_height = 0;
  std::vector<Tile> tiles;

  std::size_t columns() const { return padded_width / tile_size; }
  std::size_t rows() const { return padded_height / tile_size; }
};

/// Mirror index without repeating the edge sample (… 2 1 | 0 1 2 … n-1 | n-2 …),
/// folded repeatedly when the padding exceeds the image.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept;

/// Pads right/bottom by reflection up to multiples of tile_size.
TileGrid tile(const ImageRGB& image, std::size_t tile_size);

/// Reassembles the canvas and crops the padding.
ImageRGB stitch(const TileGrid& grid);

}  // namespace colornorm
