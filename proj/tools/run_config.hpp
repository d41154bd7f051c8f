#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "colornorm/inference.hpp"
#include "colornorm/selfsup.hpp"

namespace colornorm::cli {

/// Training run description. JSON keys match the member names; unknown
/// keys are rejected.
struct RunConfig {
  TrainConfig train;
  std::size_t num_patches = 1000;
  std::vector<std::filesystem::path> target_images;
  std::filesystem::path corpus_dir;  // used when target_images is empty
  std::filesystem::path output_weights = "colornorm.weights";
  std::filesystem::path log_csv;     // optional
  OffsetMode mode = OffsetMode::Global;
  unsigned threads = 1;
};

/// Throws Error(Config) naming the offending key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Target images after resolving corpus_dir. Throws Error(Config) if none
/// are listed or any is missing, and if an output directory does not exist.
std::vector<std::filesystem::path> resolve_inputs(const RunConfig& config);

}  // namespace colornorm::cli
