#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "colornorm/classical.hpp"
#include "colornorm/inference.hpp"
#include "colornorm/model.hpp"

namespace colornorm {

enum class Method { ColorNormNetGlobal, ColorNormNetPixel, Reinhard, Macenko };

/// Throws InvalidArgument listing the valid names.
Method parse_method(const std::string& name);
std::string to_string(Method method);
const std::vector<std::string>& method_names();

struct ThroughputReport {
  std::string method;
  std::size_t images = 0;
  std::size_t pixels = 0;
  double seconds = 0.0;
  unsigned threads = 1;
  std::uint32_t output_crc = 0;  // CRC-32 of all encoded outputs, in corpus order

  double seconds_per_gigapixel() const { return seconds * 1e9 / static_cast<double>(pixels); }
};

struct BenchmarkTargets {
  const Model* model = nullptr;  // required for the colornormnet methods
  LabStats reinhard;
  StainModel macenko;
};

struct BenchmarkOptions {
  unsigned threads = 1;
  std::size_t min_pixels = 10'000'000;
  std::size_t tile_size = 1024;
  std::size_t max_pass_pixels = 64'000'000;
};

/// Decodes, normalizes and re-encodes every PPM in `corpus`, timing the
/// whole loop. Throws InvalidArgument when the corpus is empty or holds
/// fewer than options.min_pixels pixels.
ThroughputReport run_benchmark(Method method, const std::vector<std::filesystem::path>& corpus,
                               const BenchmarkTargets& targets, const BenchmarkOptions& options);

/// Sorted *.ppm files of a directory.
std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& dir);

std::string reports_to_json(const std::vector<ThroughputReport>& reports);
std::string reports_to_table(const std::vector<ThroughputReport>& reports);

}  // namespace colornorm
