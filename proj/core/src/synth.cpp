#include "colornorm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <system_error>

#include "colornorm/error.hpp"

namespace colornorm {

namespace {

// Bilinear value noise with smoothstep weights on a lattice of `cell` pixels.
class ValueNoise {
 public:
  ValueNoise(std::size_t width, std::size_t height, double cell, Rng& rng)
      : cell_(cell),
        cols_(static_cast<std::size_t>(static_cast<double>(width) / cell) + 2),
        rows_(static_cast<std::size_t>(static_cast<double>(height) / cell) + 2),
        lattice_(cols_ * rows_) {
    for (float& v : lattice_) v = rng.uniform(0.0f, 1.0f);
  }

  double operator()(std::size_t x, std::size_t y) const {
    const double fx = static_cast<double>(x) / cell_, fy = static_cast<double>(y) / cell_;
    const auto ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
    const double tx = smooth(fx - static_cast<double>(ix)), ty = smooth(fy - static_cast<double>(iy));
    const double a = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * tx;
    const double b = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * tx;
    return a + (b - a) * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double at(std::size_t x, std::size_t y) const { return lattice_[y * cols_ + x]; }

  double cell_;
  std::size_t cols_, rows_;
  std::vector<float> lattice_;
};

std::array<double, 3> unit(std::array<double, 3> v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

std::array<std::array<double, 3>, 2> synthetic_stains() {
  return {unit({0.5626, 0.7201, 0.4062}), unit({0.2159, 0.8012, 0.5581})};
}

ImageRGB synthesize_image(std::size_t width, std::size_t height, Rng& rng) {
  if (width == 0 || height == 0) fail(ErrorCode::InvalidArgument, "image size must be positive");
  const auto stains = synthetic_stains();
  const double scale = 16.0;
  const ValueNoise region(width, height, 1.5 * scale, rng);
  const ValueNoise amount_h(width, height, scale, rng);
  const ValueNoise amount_e(width, height, scale, rng);
  const ValueNoise background(width, height, 2.0 * scale, rng);

  ImageRGB image(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      float* px = image.ptr(x, y);
      const double grain = 1.0 + 0.1 * (rng.uniform_double(0.0, 1.0) - 0.5);
      if (background(x, y) < 0.3) {
        px[0] = px[1] = px[2] = 1.0f;
        continue;
      }
      // 0 below 0.35 (pure hematoxylin), 1 above 0.65 (pure eosin).
      const double t = std::clamp((region(x, y) - 0.35) / 0.3, 0.0, 1.0);
      const double ch = (1.0 - t) * (0.5 + 0.9 * amount_h(x, y)) * grain;
      const double ce = t * (0.8 + 0.7 * amount_e(x, y)) * grain;
      for (int c = 0; c < 3; ++c) {
        const double od = stains[0][c] * ch + stains[1][c] * ce;
        px[c] = from_byte(to_byte(static_cast<float>(std::pow(10.0, -od))));
      }
    }
  }
  return image;
}

std::vector<ImageRGB> synthesize_corpus(std::size_t count, std::size_t width, std::size_t height,
                                        std::uint64_t seed) {
  Rng root(seed);
  std::vector<ImageRGB> images;
  images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.split();
    images.push_back(synthesize_image(width, height, rng));
  }
  return images;
}

std::string corpus_file_name(std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "synth_%05zu.ppm", index);
  return name;
}

std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir, std::size_t count,
                                                std::size_t width, std::size_t height, std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    fail(ErrorCode::Io, "cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
  Rng root(seed);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.split();
    const std::filesystem::path path = dir / corpus_file_name(i);
    write_ppm(synthesize_image(width, height, rng), path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace colornorm
