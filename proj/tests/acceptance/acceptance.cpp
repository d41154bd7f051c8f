// Acceptance run: one PASS/FAIL line per criterion, with the measurements
// that decided it. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "colornorm/classical.hpp"
#include "colornorm/gradcheck.hpp"
#include "colornorm/inference.hpp"
#include "colornorm/model.hpp"
#include "colornorm/selfsup.hpp"
#include "colornorm/synth.hpp"
#include "colornorm/throughput.hpp"
#include "colornorm/tiling.hpp"
#include "colornorm/weights_io.hpp"

namespace cn = colornorm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("CRITERION %d %s: %s (%s)\n", id, name.c_str(), ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void note(const char* fmt, auto... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double angle_deg(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < 3; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

// Share of 8-bit values within one level, and the largest difference.
std::pair<double, int> level_agreement(const cn::ImageRGB& a, const cn::ImageRGB& b) {
  int worst = 0;
  std::size_t within = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const int d = std::abs(int(cn::to_byte(a.pixels[i])) - int(cn::to_byte(b.pixels[i])));
    worst = std::max(worst, d);
    within += d <= 1;
  }
  return {static_cast<double>(within) / static_cast<double>(a.pixels.size()), worst};
}

cn::ImageRGB random_image(std::size_t w, std::size_t h, cn::Rng& rng) {
  cn::ImageRGB im(w, h);
  for (auto& v : im.pixels) v = cn::from_byte(static_cast<std::uint8_t>(rng.below(256)));
  return im;
}

// Trained in criterion 4, reused by 5 and 7.
std::optional<cn::Model> trained;

void criterion1() {
  const auto t0 = Clock::now();
  const auto suite = cn::run_gradient_suite();
  const double secs = seconds_since(t0);
  bool ok = secs < 120.0;
  for (const auto& e : suite) {
    note("%-24s max rel err %.3e (tol %.0e) over %zu coords, worst %s", e.name.c_str(), e.result.max_rel_error,
         e.tolerance, e.result.coordinates, e.result.worst.c_str());
    ok = ok && e.passed();
    if (!e.passed()) {
      auto s = e.result.samples;
      std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
      std::size_t over = 0;
      for (const auto& x : s) over += x.rel_error >= e.tolerance;
      note("  %zu of %zu coordinates above tolerance; largest:", over, s.size());
      for (std::size_t i = 0; i < std::min<std::size_t>(5, s.size()); ++i)
        note("  %s[%zu] analytic %.6e numeric %.6e rel %.2e", s[i].block.c_str(), s[i].index, s[i].analytic,
             s[i].numeric, s[i].rel_error);
    }
  }
  // Every coordinate of the end-to-end check, for the record.
  cn::Rng rng(2024);
  const auto full = cn::check_model_end_to_end(rng, 1u << 20);
  std::size_t over = 0;
  double largest_bad = 0.0;
  for (const auto& x : full.samples) {
    if (x.rel_error < 1e-3) continue;
    ++over;
    largest_bad = std::max(largest_bad, std::max(std::abs(x.analytic), std::abs(x.numeric)));
  }
  note("all %zu end-to-end coordinates: max rel err %.3e, %zu above 1e-3 (largest such |grad| %.2e)", full.coordinates,
       full.max_rel_error, over, largest_bad);
  verdict(1, "gradient suite", ok, fmt("%.1f s, limit 120 s", secs));
}

void criterion2() {
  cn::Rng rng(1);
  cn::Model m = cn::build_model(cn::ArchSpec::reference(), rng);
  const std::size_t count = cn::parameter_count(m);
  note("parameters %zu (2,352 quoted for the original network; the reference layout gives 2,136)", count);
  bool shapes = true;
  m.set_mode(cn::Mode::Infer);
  for (std::size_t s : {1, 7, 51, 73, 256, 1024}) {
    cn::Tensor x({1, 3, s, s});
    for (auto& v : x.data()) v = rng.uniform(0.0f, 1.0f);
    const cn::Tensor y = m.forward(x);
    const bool same = y.shape() == x.shape();
    shapes = shapes && same;
    note("H=W=%zu output %s", s, same ? "same shape" : "SHAPE MISMATCH");
  }
  verdict(2, "architecture contract", count == 2136 && shapes, fmt("count %zu, shapes %s", count, shapes ? "ok" : "bad"));
}

cn::PatchSet synthetic_patches(std::size_t n, std::size_t size, std::size_t images, std::size_t image_size,
                               std::uint64_t seed) {
  const auto corpus = cn::synthesize_corpus(images, image_size, image_size, seed);
  cn::Rng rng(seed ^ 0x5eed);
  return cn::sample_patches(corpus, n, size, rng);
}

void criterion3() {
  cn::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.patch_size = 64;
  cfg.lr = 0.001;
  cfg.lambda = 0.1;
  cfg.iterations = 300;
  cfg.holdout_every = 50;
  bool ok = true;
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto patches = synthetic_patches(200, 64, 20, 256, 100 + seed);
    cfg.seed = seed;
    const auto res = cn::train(patches, cfg);
    const double ratio = res.log.final_holdout_loss() / res.log.initial_holdout_loss;
    std::string curve;
    for (const auto& e : res.log.entries)
      if (e.holdout_loss) curve += fmt(" %.4f", *e.holdout_loss);
    note("seed %llu: holdout %.4f ->%s, ratio %.3f", static_cast<unsigned long long>(seed),
         res.log.initial_holdout_loss, curve.c_str(), ratio);
    worst = std::max(worst, ratio);
    ok = ok && ratio <= 0.3;
  }
  const double secs = seconds_since(t0);
  verdict(3, "self-supervised convergence", ok && secs < 600.0,
          fmt("worst final/initial holdout %.3f (limit 0.3), %.0f s for 5 seeds (limit 600 s)", worst, secs));
}

void criterion4() {
  // Patches for training and evaluation come from disjoint images.
  const auto patches = synthetic_patches(2000, 64, 60, 256, 400);
  const auto held = synthetic_patches(200, 64, 20, 256, 401);
  cn::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.patch_size = 64;
  cfg.iterations = 3000;
  cfg.holdout_every = 500;
  cfg.seed = 4;
  const auto t0 = Clock::now();
  auto res = cn::train(patches, cfg);
  note("trained %zu iterations in %.0f s, holdout %.4f -> %.4f", cfg.iterations, seconds_since(t0),
       res.log.initial_holdout_loss, res.log.final_holdout_loss());
  cn::Rng rng(44);
  const auto rec = cn::evaluate_offset_recovery(res.model, held, 1000, rng);
  note("trained MAE R %.4f G %.4f B %.4f", rec.mae[0], rec.mae[1], rec.mae[2]);

  cn::Rng zrng(45);
  cn::Model zero = cn::build_model(cn::ArchSpec::reference(), zrng);
  zero.head().weights.fill(0.0f);
  zero.head().bias.fill(0.0f);
  zero.set_mode(cn::Mode::Infer);
  const auto ctl = cn::evaluate_offset_recovery(zero, held, 1000, rng);
  note("zero-head MAE R %.4f G %.4f B %.4f", ctl.mae[0], ctl.mae[1], ctl.mae[2]);

  const bool model_ok = rec.mae[0] < 0.05 && rec.mae[2] < 0.05 && rec.mae[1] < 0.01;
  const bool control_ok = std::abs(ctl.mae[0] - 0.1) <= 0.01 && std::abs(ctl.mae[2] - 0.1) <= 0.01;
  trained = std::move(res.model);
  verdict(4, "offset recovery", model_ok && control_ok,
          fmt("trained R %.4f G %.4f B %.4f (limits 0.05/0.01/0.05); control R %.4f B %.4f (0.1 +- 0.01)", rec.mae[0],
              rec.mae[1], rec.mae[2], ctl.mae[0], ctl.mae[2]));
}

void criterion5() {
  const auto patches = synthetic_patches(200, 64, 20, 256, 500);
  cn::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.patch_size = 64;
  cfg.iterations = 60;
  cfg.holdout_every = 20;
  cfg.seed = 5;
  const auto a = cn::encode_weights(cn::train(patches, cfg).model);
  const auto b = cn::encode_weights(cn::train(patches, cfg).model);
  const bool weights_same = a == b;
  note("weight files %zu bytes, %s", a.size(), weights_same ? "identical" : "DIFFER");

  cn::Rng rng(55);
  const cn::ImageRGB image = cn::synthesize_image(700, 500, rng);
  cn::Model fallback = cn::build_model(cn::ArchSpec::reference(), rng);
  fallback.set_mode(cn::Mode::Infer);
  const cn::Model& model = trained ? *trained : fallback;
  bool threads_same = true;
  for (auto mode : {cn::OffsetMode::Global, cn::OffsetMode::Pixel}) {
    cn::InferenceOptions one, four;
    one.mode = four.mode = mode;
    four.threads = 4;
    const bool same =
        cn::encode_ppm(cn::normalize_colornormnet(model, image, one)) == cn::encode_ppm(cn::normalize_colornormnet(model, image, four));
    note("colornormnet %s: threads 1 vs 4 %s", cn::to_string(mode).c_str(), same ? "identical" : "DIFFER");
    threads_same = threads_same && same;
  }
  const auto stats = cn::compute_lab_stats(image);
  const auto stain = cn::estimate_stain_macenko(image);
  const bool classical = cn::normalize_reinhard(image, stats, 1) == cn::normalize_reinhard(image, stats, 4) &&
                         cn::normalize_macenko(image, stain, 1) == cn::normalize_macenko(image, stain, 4) &&
                         cn::estimate_stain_macenko(image, 4) == stain && cn::compute_lab_stats(image, 4) == stats;
  note("reinhard/macenko: threads 1 vs 4 %s", classical ? "identical" : "DIFFER");
  verdict(5, "determinism", weights_same && threads_same && classical,
          fmt("weights %s, outputs %s", weights_same ? "identical" : "differ",
              threads_same && classical ? "thread-invariant" : "thread-dependent"));
}

void criterion6() {
  const auto truth = cn::synthetic_stains();
  double worst_angle = 0.0;
  double worst_share = 1.0;
  double worst_reinhard = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    cn::Rng rng(600 + seed);
    const auto image = cn::synthesize_image(512, 512, rng);
    const auto stain = cn::estimate_stain_macenko(image);
    const double ah = angle_deg(stain.hematoxylin, truth[0]);
    const double ae = angle_deg(stain.eosin, truth[1]);
    worst_angle = std::max({worst_angle, ah, ae});
    const auto [share, lvl] = level_agreement(cn::normalize_macenko(image, stain), image);
    worst_share = std::min(worst_share, share);
    const auto rein = cn::normalize_reinhard(image, cn::compute_lab_stats(image));
    double d = 0.0;
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
      d = std::max(d, static_cast<double>(std::abs(rein.pixels[i] - image.pixels[i])));
    worst_reinhard = std::max(worst_reinhard, d);
    note("image %llu: H %.3f deg, E %.3f deg, macenko self %.4f%% within 1 level (max %d), reinhard self %.2e",
         static_cast<unsigned long long>(seed), ah, ae, 100.0 * share, lvl, d);
  }
  verdict(6, "baseline oracles", worst_angle < 2.0 && worst_share >= 0.99 && worst_reinhard <= 1e-3,
          fmt("worst angle %.3f deg (limit 2), macenko %.2f%% within 1 level (limit 99%%), reinhard %.2e (limit 1e-3)",
              worst_angle, 100.0 * worst_share, worst_reinhard));
}

void criterion7() {
  const fs::path dir = fs::temp_directory_path() / "colornorm_acceptance_corpus";
  fs::remove_all(dir);
  const std::size_t n = 25, side = 2048;  // 104.9 megapixels
  const auto files = cn::write_corpus(dir, n, side, side, 7);
  cn::Rng rng(77);
  cn::Model fallback = cn::build_model(cn::ArchSpec::reference(), rng);
  fallback.set_mode(cn::Mode::Infer);
  cn::BenchmarkTargets targets;
  targets.model = trained ? &*trained : &fallback;
  const auto target = cn::read_ppm(files.front());
  targets.reinhard = cn::compute_lab_stats(target);
  targets.macenko = cn::estimate_stain_macenko(target);
  cn::BenchmarkOptions opt;
  opt.min_pixels = 100'000'000;
  std::vector<cn::ThroughputReport> reports;
  for (auto m : {cn::Method::ColorNormNetGlobal, cn::Method::Macenko, cn::Method::Reinhard})
    reports.push_back(cn::run_benchmark(m, files, targets, opt));
  std::istringstream table(cn::reports_to_table(reports));
  for (std::string line; std::getline(table, line);) note("%s", line.c_str());
  fs::remove_all(dir);
  const double net = reports[0].seconds_per_gigapixel(), mac = reports[1].seconds_per_gigapixel();
  verdict(7, "throughput ordering", reports[0].seconds <= reports[1].seconds,
          fmt("colornormnet_global %.1f s/GPix vs macenko %.1f s/GPix on %.1f MPix, 1 thread", net, mac,
              reports[0].pixels / 1e6));
}

void criterion8() {
  cn::Rng rng(8);
  bool tiles = true;
  for (int t = 0; t < 30; ++t) {
    const auto im = random_image(1 + rng.below(1500), 1 + rng.below(1500), rng);
    tiles = tiles && cn::stitch(cn::tile(im, 1 + rng.below(600))) == im;
  }
  bool ppm = true;
  for (int t = 0; t < 30; ++t) {
    const auto im = random_image(1 + rng.below(400), 1 + rng.below(400), rng);
    std::stringstream buf;
    cn::write_ppm(im, buf);
    const std::string bytes = buf.str();
    const auto back = cn::read_ppm(buf);
    ppm = ppm && back == im && cn::encode_ppm(back) == std::vector<std::uint8_t>(bytes.begin(), bytes.end());
  }
  cn::Model fallback = cn::build_model(cn::ArchSpec::reference(), rng);
  fallback.set_mode(cn::Mode::Infer);
  const cn::Model& model = trained ? *trained : fallback;
  const auto image = cn::synthesize_image(1500, 1100, rng);
  cn::InferenceOptions whole, tiled;
  tiled.max_pass_pixels = 1;
  tiled.tile_size = 512;
  const bool seamless = cn::normalize_colornormnet(model, image, whole) == cn::normalize_colornormnet(model, image, tiled);
  note("stitch(tile(x)) %s; ppm round trip %s; global tiled vs untiled %s", tiles ? "exact" : "DIFFERS",
       ppm ? "exact" : "DIFFERS", seamless ? "identical" : "DIFFERS");
  verdict(8, "pipeline exactness", tiles && ppm && seamless, "bit-exact comparisons");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto want = [&](int id) { return only.empty() || only.count(id) > 0; };
  void (*const criteria[])() = {criterion1, criterion2, criterion3, criterion4,
                                criterion5, criterion6, criterion7, criterion8};
  for (int id = 1; id <= 8; ++id) {
    if (!want(id)) continue;
    try {
      criteria[id - 1]();
    } catch (const std::exception& e) {
      verdict(id, "exception", false, e.what());
    }
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
