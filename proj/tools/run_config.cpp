#include "run_config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "colornorm/error.hpp"
#include "colornorm/throughput.hpp"

namespace colornorm::cli {

namespace {

using nlohmann::json;

template <typename T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::Config, "config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(ErrorCode::Config, "config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

void check_output_dir(const std::filesystem::path& file, const char* what) {
  if (file.empty()) return;
  const auto parent = file.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    fail(ErrorCode::Config, std::string(what) + " directory " + parent.string() + " does not exist");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Config, "config must be a JSON object");

  RunConfig c;
  TrainConfig& t = c.train;
  for (const auto& [key, value] : j.items()) {
    if (key == "batch_size") t.batch_size = get_count(j, key);
    else if (key == "patch_size") t.patch_size = get_count(j, key);
    else if (key == "lr") t.lr = get<double>(j, key);
    else if (key == "lambda") t.lambda = get<double>(j, key);
    else if (key == "iterations") t.iterations = get_count(j, key);
    else if (key == "seed") t.seed = get<std::uint64_t>(j, key);
    else if (key == "offset_range") t.offset_range = get<double>(j, key);
    else if (key == "holdout_fraction") t.holdout_fraction = get<double>(j, key);
    else if (key == "holdout_every") t.holdout_every = get_count(j, key);
    else if (key == "num_patches") c.num_patches = get_count(j, key);
    else if (key == "target_images") {
      for (const auto& p : get<std::vector<std::string>>(j, key)) c.target_images.emplace_back(p);
    } else if (key == "corpus_dir") c.corpus_dir = get<std::string>(j, key);
    else if (key == "output_weights") c.output_weights = get<std::string>(j, key);
    else if (key == "log_csv") c.log_csv = get<std::string>(j, key);
    else if (key == "mode") {
      try {
        c.mode = parse_offset_mode(get<std::string>(j, key));
      } catch (const Error& e) {
        fail(ErrorCode::Config, e.what());
      }
    } else if (key == "threads") c.threads = static_cast<unsigned>(get_count(j, key));
    else fail(ErrorCode::Config, "unknown config key '" + key + "'");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Config, "cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::vector<std::filesystem::path> resolve_inputs(const RunConfig& config) {
  std::vector<std::filesystem::path> inputs = config.target_images;
  if (inputs.empty() && !config.corpus_dir.empty()) {
    if (!std::filesystem::is_directory(config.corpus_dir)) {
      fail(ErrorCode::Config, "corpus_dir " + config.corpus_dir.string() + " does not exist");
    }
    inputs = list_corpus(config.corpus_dir);
  }
  if (inputs.empty()) fail(ErrorCode::Config, "no target images (set target_images or corpus_dir)");
  for (const auto& p : inputs) {
    if (!std::filesystem::is_regular_file(p)) fail(ErrorCode::Config, "target image " + p.string() + " not found");
  }
  check_output_dir(config.output_weights, "output_weights");
  check_output_dir(config.log_csv, "log_csv");
  if (config.output_weights.empty()) fail(ErrorCode::Config, "output_weights must be set");
  return inputs;
}

}  // namespace colornorm::cli
