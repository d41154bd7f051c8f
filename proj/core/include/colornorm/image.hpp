#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "colornorm/tensor.hpp"

namespace colornorm {

/// H x W x 3 raster, interleaved RGB, row-major, values nominally in [0,1].
struct ImageRGB {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  ImageRGB() = default;
  ImageRGB(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::size_t pixel_count() const noexcept { return width * height; }
  float& at(std::size_t x, std::size_t y, std::size_t c) noexcept { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t x, std::size_t y, std::size_t c) const noexcept { return pixels[(y * width + x) * 3 + c]; }
  float* ptr(std::size_t x, std::size_t y) noexcept { return pixels.data() + (y * width + x) * 3; }
  const float* ptr(std::size_t x, std::size_t y) const noexcept { return pixels.data() + (y * width + x) * 3; }

  bool operator==(const ImageRGB&) const = default;
};

/// round(v * 255) clamped to [0, 255].
std::uint8_t to_byte(float value) noexcept;
inline float from_byte(std::uint8_t value) noexcept { return static_cast<float>(value) / 255.0f; }

struct PpmSize {
  std::size_t width = 0;
  std::size_t height = 0;
};

/// Binary P6, maxval 255. Throws UnsupportedFormat, BadMaxval or Truncated.
ImageRGB read_ppm(std::istream& in);
ImageRGB read_ppm(const std::filesystem::path& path);
/// Reads only the header.
PpmSize read_ppm_size(const std::filesystem::path& path);

/// Header is always "P6\n<w> <h>\n255\n".
void write_ppm(const ImageRGB& image, std::ostream& out);
void write_ppm(const ImageRGB& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const ImageRGB& image);

/// (1,3,H,W) planar copy.
Tensor to_tensor(const ImageRGB& image);
/// Writes batch element n of an (N,3,H,W) tensor into `planes` layout order.
void copy_to_batch(const ImageRGB& image, Tensor& batch, std::size_t n);
ImageRGB from_tensor(const Tensor& tensor, std::size_t n = 0);

double mean_luminance(const ImageRGB& image);

}  // namespace colornorm
