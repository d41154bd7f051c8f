#include "colornorm/tiling.hpp"

#include <algorithm>
#include <cstring>

#include "colornorm/error.hpp"

namespace colornorm {

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

TileGrid tile(const ImageRGB& image, std::size_t tile_size) {
  if (tile_size < 1) fail(ErrorCode::InvalidArgument, "tile size must be >= 1");
  if (image.width == 0 || image.height == 0) fail(ErrorCode::InvalidArgument, "cannot tile an empty image");
  TileGrid grid;
  grid.tile_size = tile_size;
  grid.width = image.width;
  grid.height = image.height;
  grid.padded_width = (image.width + tile_size - 1) / tile_size * tile_size;
  grid.padded_height = (image.height + tile_size - 1) / tile_size * tile_size;

  std::vector<std::size_t> col_map(grid.padded_width);
  for (std::size_t x = 0; x < grid.padded_width; ++x) col_map[x] = reflect_index(static_cast<std::ptrdiff_t>(x), image.width);

  for (std::size_t ty = 0; ty < grid.padded_height; ty += tile_size) {
    for (std::size_t tx = 0; tx < grid.padded_width; tx += tile_size) {
      Tile t{tx, ty, ImageRGB(tile_size, tile_size)};
      for (std::size_t y = 0; y < tile_size; ++y) {
        const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(ty + y), image.height);
        for (std::size_t x = 0; x < tile_size; ++x) {
          const std::size_t sx = col_map[tx + x];
          std::memcpy(t.image.ptr(x, y), image.ptr(sx, sy), 3 * sizeof(float));
        }
      }
      grid.tiles.push_back(std::move(t));
    }
  }
  return grid;
}

ImageRGB stitch(const TileGrid& grid) {
  if (grid.tiles.size() != grid.columns() * grid.rows()) {
    fail(ErrorCode::InvalidArgument, "tile grid is incomplete");
  }
  ImageRGB out(grid.width, grid.height);
  for (const Tile& t : grid.tiles) {
    if (t.image.width != grid.tile_size || t.image.height != grid.tile_size) {
      fail(ErrorCode::ShapeMismatch, "tile size differs from grid tile size");
    }
    if (t.x >= grid.width || t.y >= grid.height) continue;
    const std::size_t w = std::min(grid.tile_size, grid.width - t.x);
    const std::size_t h = std::min(grid.tile_size, grid.height - t.y);
    for (std::size_t y = 0; y < h; ++y) {
      std::memcpy(out.ptr(t.x, t.y + y), t.image.ptr(0, y), 3 * w * sizeof(float));
    }
  }
  return out;
}

}  // namespace colornorm
