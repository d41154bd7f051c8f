#include "commands.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "colornorm/classical.hpp"
#include "colornorm/error.hpp"
#include "colornorm/gradcheck.hpp"
#include "colornorm/inference.hpp"
#include "colornorm/selfsup.hpp"
#include "colornorm/synth.hpp"
#include "colornorm/throughput.hpp"
#include "colornorm/weights_io.hpp"
#include "run_config.hpp"

namespace colornorm::cli {

namespace {

// Patch positions use their own stream so they are independent of the
// training streams derived from the same seed.
constexpr std::uint64_t kPatchStream = 0xA5A5A5A5A5A5A5A5ULL;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Config:
      return kExitUsage;
    case ErrorCode::NonFinite:
    case ErrorCode::DegenerateBatch:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text << '\n')) fail(ErrorCode::Io, "cannot write " + path.string());
}

struct TrainArgs {
  std::string config;
  std::size_t iterations = 0, batch_size = 0, num_patches = 0;
  std::uint64_t seed = 0;
  std::string output_weights, log_csv;
};

int cmd_train(const TrainArgs& args, const CLI::App& sub, std::ostream& out) {
  RunConfig cfg = load_run_config(args.config);
  if (sub.count("--iterations")) cfg.train.iterations = args.iterations;
  if (sub.count("--batch-size")) cfg.train.batch_size = args.batch_size;
  if (sub.count("--num-patches")) cfg.num_patches = args.num_patches;
  if (sub.count("--seed")) cfg.train.seed = args.seed;
  if (sub.count("--output-weights")) cfg.output_weights = args.output_weights;
  if (sub.count("--log-csv")) cfg.log_csv = args.log_csv;
  try {
    cfg.train.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, e.what());
  }
  const auto inputs = resolve_inputs(cfg);

  std::vector<ImageRGB> images;
  for (const auto& p : inputs) images.push_back(read_ppm(p));
  Rng sampler(cfg.train.seed ^ kPatchStream);
  const PatchSet patches = sample_patches(images, cfg.num_patches, cfg.train.patch_size, sampler);
  images.clear();

  const TrainResult result = train(patches, cfg.train);
  save_weights(result.model, cfg.output_weights);
  if (!cfg.log_csv.empty()) {
    std::ofstream csv(cfg.log_csv);
    if (!csv) fail(ErrorCode::Io, "cannot write " + cfg.log_csv.string());
    write_train_log_csv(result.log, csv);
  }
  out << std::setprecision(6) << "initial holdout loss: " << result.log.initial_holdout_loss << '\n'
      << "final holdout loss: " << result.log.final_holdout_loss() << '\n'
      << "weights: " << cfg.output_weights.string() << '\n';
  return kExitOk;
}

struct NormalizeArgs {
  std::string method = "colornormnet", mode = "global";
  std::string weights, target_stats, input, output;
  unsigned threads = 1;
  std::size_t tile_size = 1024, max_pass_pixels = 64'000'000;
};

int cmd_normalize(const NormalizeArgs& a) {
  const ImageRGB input = read_ppm(a.input);
  ImageRGB result;
  if (a.method == "colornormnet") {
    if (a.weights.empty()) fail(ErrorCode::Config, "--weights is required for method colornormnet");
    const Model model = load_weights(a.weights);
    InferenceOptions opt;
    opt.mode = parse_offset_mode(a.mode);
    opt.threads = a.threads;
    opt.tile_size = a.tile_size;
    opt.max_pass_pixels = a.max_pass_pixels;
    result = normalize_colornormnet(model, input, opt);
  } else {
    if (a.target_stats.empty()) fail(ErrorCode::Config, "--target-stats is required for method " + a.method);
    const std::string text = read_text(a.target_stats);
    result = a.method == "reinhard" ? normalize_reinhard(input, lab_stats_from_json(text), a.threads)
                                    : normalize_macenko(input, stain_model_from_json(text), a.threads);
  }
  write_ppm(result, a.output);
  return kExitOk;
}

struct FitArgs {
  std::string method, input, output;
  unsigned threads = 1;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const ImageRGB image = read_ppm(a.input);
  const std::string json = a.method == "reinhard" ? to_json(compute_lab_stats(image, a.threads))
                                                  : to_json(estimate_stain_macenko(image, a.threads));
  if (a.output.empty()) {
    out << json << '\n';
  } else {
    write_text(a.output, json);
  }
  return kExitOk;
}

struct SynthArgs {
  std::string dir;
  std::size_t n = 200, size = 256;
  std::uint64_t seed = 1;
};

int cmd_synthesize(const SynthArgs& a, std::ostream& out) {
  if (a.size == 0) fail(ErrorCode::Config, "--size must be positive");
  const auto paths = write_corpus(a.dir, a.n, a.size, a.size, a.seed);
  out << "wrote " << paths.size() << " images to " << a.dir << '\n';
  return kExitOk;
}

struct BenchArgs {
  std::vector<std::string> methods;
  std::string corpus, weights, target, json;
  unsigned threads = 1;
};

int cmd_benchmark(const BenchArgs& a, std::ostream& out) {
  const auto corpus = list_corpus(a.corpus);
  if (corpus.empty()) fail(ErrorCode::InvalidArgument, "benchmark corpus " + a.corpus + " has no .ppm files");

  std::vector<Method> methods;
  for (const auto& name : a.methods) methods.push_back(parse_method(name));
  BenchmarkTargets targets;
  std::optional<Model> model;
  bool classical = false;
  for (Method m : methods) {
    if (m == Method::ColorNormNetGlobal || m == Method::ColorNormNetPixel) {
      if (a.weights.empty()) fail(ErrorCode::Config, "--weights is required for " + to_string(m));
      if (!model) model = load_weights(a.weights);
    } else {
      classical = true;
    }
  }
  targets.model = model ? &*model : nullptr;
  if (classical) {
    const ImageRGB target = read_ppm(a.target.empty() ? corpus.front() : std::filesystem::path(a.target));
    targets.reinhard = compute_lab_stats(target);
    targets.macenko = estimate_stain_macenko(target);
  }

  BenchmarkOptions options;
  options.threads = a.threads;
  std::vector<ThroughputReport> reports;
  for (Method m : methods) reports.push_back(run_benchmark(m, corpus, targets, options));
  out << reports_to_table(reports);
  if (!a.json.empty()) write_text(a.json, reports_to_json(reports));
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& e : run_gradient_suite(seed)) {
    out << std::left << std::setw(28) << e.name << " max rel err " << std::scientific << std::setprecision(3)
        << e.result.max_rel_error << " (tol " << e.tolerance << ") " << (e.passed() ? "ok" : "FAILED")
        << "  worst " << e.result.worst << std::defaultfloat << '\n';
    ok = ok && e.passed();
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stain color normalization: ColorNormNet, Reinhard and Macenko"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train ColorNormNet on patches from target images");
  train_cmd->add_option("--config", train_args.config, "Run configuration (JSON)")->required();
  train_cmd->add_option("--iterations", train_args.iterations);
  train_cmd->add_option("--batch-size", train_args.batch_size);
  train_cmd->add_option("--num-patches", train_args.num_patches);
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_option("--output-weights", train_args.output_weights);
  train_cmd->add_option("--log-csv", train_args.log_csv);

  NormalizeArgs norm_args;
  auto* norm_cmd = app.add_subcommand("normalize", "Normalize one PPM image");
  norm_cmd->add_option("--method", norm_args.method)
      ->check(CLI::IsMember({"colornormnet", "reinhard", "macenko"}))
      ->capture_default_str();
  norm_cmd->add_option("--mode", norm_args.mode)->check(CLI::IsMember({"global", "pixel"}))->capture_default_str();
  norm_cmd->add_option("--weights", norm_args.weights, "ColorNormNet weight file");
  norm_cmd->add_option("--target-stats", norm_args.target_stats, "JSON written by `fit`");
  norm_cmd->add_option("--input,-i", norm_args.input)->required();
  norm_cmd->add_option("--output,-o", norm_args.output)->required();
  norm_cmd->add_option("--threads", norm_args.threads)->check(CLI::PositiveNumber);
  norm_cmd->add_option("--tile-size", norm_args.tile_size)->check(CLI::PositiveNumber);
  norm_cmd->add_option("--max-pass-pixels", norm_args.max_pass_pixels)->check(CLI::PositiveNumber);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit Reinhard or Macenko target statistics from an image");
  fit_cmd->add_option("--method", fit_args.method)->check(CLI::IsMember({"reinhard", "macenko"}))->required();
  fit_cmd->add_option("--input,-i", fit_args.input)->required();
  fit_cmd->add_option("--output,-o", fit_args.output, "JSON output (stdout if omitted)");
  fit_cmd->add_option("--threads", fit_args.threads)->check(CLI::PositiveNumber);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synthesize", "Generate a synthetic two-stain corpus");
  synth_cmd->add_option("--out", synth_args.dir)->required();
  synth_cmd->add_option("--n", synth_args.n)->capture_default_str();
  synth_cmd->add_option("--size", synth_args.size)->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.seed)->capture_default_str();

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("benchmark", "Time end-to-end normalization of a PPM corpus");
  bench_cmd->add_option("--methods", bench_args.methods)
      ->delimiter(',')
      ->check(CLI::IsMember(method_names()))
      ->required();
  bench_cmd->add_option("--corpus", bench_args.corpus)->required();
  bench_cmd->add_option("--weights", bench_args.weights);
  bench_cmd->add_option("--target", bench_args.target, "Target image for classical methods (default: first file)");
  bench_cmd->add_option("--threads", bench_args.threads)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--json", bench_args.json, "Also write the report as JSON");

  std::uint64_t grad_seed = 2024;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad_cmd->add_option("--seed", grad_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, *train_cmd, out);
    if (*norm_cmd) return cmd_normalize(norm_args);
    if (*fit_cmd) return cmd_fit(fit_args, out);
    if (*synth_cmd) return cmd_synthesize(synth_args, out);
    if (*bench_cmd) return cmd_benchmark(bench_args, out);
    if (*grad_cmd) return cmd_gradcheck(grad_seed, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace colornorm::cli
