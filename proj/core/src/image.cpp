#include "colornorm/image.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "colornorm/error.hpp"

namespace colornorm {

std::uint8_t to_byte(float value) noexcept {
  const float scaled = std::nearbyint(value * 255.0f);
  if (!(scaled > 0.0f)) return 0;
  if (scaled >= 255.0f) return 255;
  return static_cast<std::uint8_t>(scaled);
}

namespace {

// Next header integer, skipping whitespace and '#' comments.
std::size_t read_header_value(std::istream& in, const char* what) {
  int ch = in.get();
  while (true) {
    if (ch == '#') {
      while (ch != '\n' && ch != EOF) ch = in.get();
    } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f') {
      ch = in.get();
    } else {
      break;
    }
  }
  if (ch < '0' || ch > '9') fail(ErrorCode::Truncated, std::string("PPM header: missing ") + what);
  std::size_t value = 0;
  while (ch >= '0' && ch <= '9') {
    value = value * 10 + static_cast<std::size_t>(ch - '0');
    if (value > (std::size_t{1} << 40)) fail(ErrorCode::UnsupportedFormat, std::string("PPM header: ") + what + " too large");
    ch = in.get();
  }
  // Exactly one whitespace byte separates the header from the raster.
  if (ch == EOF) fail(ErrorCode::Truncated, std::string("PPM header ends after ") + what);
  return value;
}

PpmSize read_header(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6') {
    fail(ErrorCode::UnsupportedFormat, "expected binary PPM magic \"P6\"");
  }
  PpmSize size;
  size.width = read_header_value(in, "width");
  size.height = read_header_value(in, "height");
  const std::size_t maxval = read_header_value(in, "maxval");
  if (maxval != 255) fail(ErrorCode::BadMaxval, "PPM maxval " + std::to_string(maxval) + " unsupported (need 255)");
  if (size.width == 0 || size.height == 0) fail(ErrorCode::UnsupportedFormat, "PPM with zero width or height");
  return size;
}

}  // namespace

ImageRGB read_ppm(std::istream& in) {
  const PpmSize size = read_header(in);
  const std::size_t bytes = size.width * size.height * 3;
  std::vector<unsigned char> raw(bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != bytes) {
    fail(ErrorCode::Truncated, "PPM payload has " + std::to_string(got) + " of " + std::to_string(bytes) + " bytes");
  }
  ImageRGB image(size.width, size.height);
  for (std::size_t i = 0; i < bytes; ++i) image.pixels[i] = from_byte(raw[i]);
  return image;
}

ImageRGB read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return read_ppm(in);
}

PpmSize read_ppm_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return read_header(in);
}

std::vector<std::uint8_t> encode_ppm(const ImageRGB& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + image.pixels.size());
  for (float v : image.pixels) out.push_back(to_byte(v));
  return out;
}

void write_ppm(const ImageRGB& image, std::ostream& out) {
  const std::vector<std::uint8_t> bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "failed writing PPM");
}

void write_ppm(const ImageRGB& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_ppm(image, out);
}

void copy_to_batch(const ImageRGB& image, Tensor& batch, std::size_t n) {
  require_same_shape({batch.dim(1), batch.dim(2), batch.dim(3)}, {3, image.height, image.width},
                     "image vs batch slot");
  const std::size_t plane = image.pixel_count();
  float* dst = batch.raw() + n * 3 * plane;
  for (std::size_t i = 0; i < plane; ++i) {
    dst[i] = image.pixels[3 * i];
    dst[plane + i] = image.pixels[3 * i + 1];
    dst[2 * plane + i] = image.pixels[3 * i + 2];
  }
}

Tensor to_tensor(const ImageRGB& image) {
  Tensor t({1, 3, image.height, image.width});
  copy_to_batch(image, t, 0);
  return t;
}

ImageRGB from_tensor(const Tensor& tensor, std::size_t n) {
  if (tensor.rank() != 4 || tensor.dim(1) != 3) {
    fail(ErrorCode::ShapeMismatch, "expected (N,3,H,W) tensor, got " + to_string(tensor.shape()));
  }
  ImageRGB image(tensor.dim(3), tensor.dim(2));
  const std::size_t plane = image.pixel_count();
  const float* src = tensor.raw() + n * 3 * plane;
  for (std::size_t i = 0; i < plane; ++i) {
    image.pixels[3 * i] = src[i];
    image.pixels[3 * i + 1] = src[plane + i];
    image.pixels[3 * i + 2] = src[2 * plane + i];
  }
  return image;
}

double mean_luminance(const ImageRGB& image) {
  double sum = 0.0;
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    sum += 0.299 * image.pixels[3 * i] + 0.587 * image.pixels[3 * i + 1] + 0.114 * image.pixels[3 * i + 2];
  }
  return sum / static_cast<double>(image.pixel_count());
}

}  // namespace colornorm
