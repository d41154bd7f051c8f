#include "colornorm/throughput.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "colornorm/error.hpp"

namespace colornorm {

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {"colornormnet_global", "colornormnet_pixel", "reinhard", "macenko"};
  return names;
}

Method parse_method(const std::string& name) {
  const auto& names = method_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    fail(ErrorCode::InvalidArgument, "unknown method '" + name + "' (valid: " + valid + ")");
  }
  return static_cast<Method>(it - names.begin());
}

std::string to_string(Method method) { return method_names()[static_cast<std::size_t>(method)]; }

std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, "corpus directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

ThroughputReport run_benchmark(Method method, const std::vector<std::filesystem::path>& corpus,
                               const BenchmarkTargets& targets, const BenchmarkOptions& options) {
  if (corpus.empty()) fail(ErrorCode::InvalidArgument, "benchmark corpus is empty");
  std::size_t pixels = 0;
  for (const auto& path : corpus) {
    const PpmSize size = read_ppm_size(path);
    pixels += size.width * size.height;
  }
  if (pixels < options.min_pixels) {
    fail(ErrorCode::InvalidArgument, "benchmark corpus holds " + std::to_string(pixels) + " pixels, need at least " +
                                         std::to_string(options.min_pixels));
  }
  const bool network = method == Method::ColorNormNetGlobal || method == Method::ColorNormNetPixel;
  if (network && targets.model == nullptr) fail(ErrorCode::InvalidArgument, to_string(method) + " needs a model");

  InferenceOptions inference;
  inference.mode = method == Method::ColorNormNetPixel ? OffsetMode::Pixel : OffsetMode::Global;
  inference.threads = options.threads;
  inference.tile_size = options.tile_size;
  inference.max_pass_pixels = options.max_pass_pixels;

  ThroughputReport report;
  report.method = to_string(method);
  report.images = corpus.size();
  report.pixels = pixels;
  report.threads = options.threads;

  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto start = std::chrono::steady_clock::now();
  std::optional<InferenceEngine> engine;
  if (network) engine.emplace(*targets.model);
  for (const auto& path : corpus) {
    const ImageRGB input = read_ppm(path);
    ImageRGB output;
    switch (method) {
      case Method::ColorNormNetGlobal:
      case Method::ColorNormNetPixel:
        output = engine->normalize(input, inference);
        break;
      case Method::Reinhard:
        output = normalize_reinhard(input, targets.reinhard, options.threads);
        break;
      case Method::Macenko:
        output = normalize_macenko(input, targets.macenko, options.threads);
        break;
    }
    const std::vector<std::uint8_t> encoded = encode_ppm(output);
    crc = ::crc32(crc, encoded.data(), static_cast<uInt>(encoded.size()));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.output_crc = static_cast<std::uint32_t>(crc);
  return report;
}

std::string reports_to_json(const std::vector<ThroughputReport>& reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) {
    char crc[9];
    std::snprintf(crc, sizeof crc, "%08x", r.output_crc);
    out.push_back({{"method", r.method},
                   {"images", r.images},
                   {"pixels", r.pixels},
                   {"seconds", r.seconds},
                   {"seconds_per_gigapixel", r.seconds_per_gigapixel()},
                   {"threads", r.threads},
                   {"output_crc32", crc}});
  }
  return out.dump(2);
}

std::string reports_to_table(const std::vector<ThroughputReport>& reports) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %14s %12s %14s %8s\n", "Method", "Time (s/GPix)", "Wall (s)", "Pixels",
                "Threads");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-22s %14.1f %12.3f %14zu %8u\n", r.method.c_str(), r.seconds_per_gigapixel(),
                  r.seconds, r.pixels, r.threads);
    out << line;
  }
  return out.str();
}

}  // namespace colornorm
