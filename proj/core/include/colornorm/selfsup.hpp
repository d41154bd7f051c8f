#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "colornorm/image.hpp"
#include "colornorm/model.hpp"
#include "colornorm/rng.hpp"

namespace colornorm {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t patch_size = 256;
  double lr = 0.001;
  double lambda = 0.1;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double offset_range = 0.2;
  double holdout_fraction = 0.1;
  std::size_t holdout_every = 50;

  /// Throws InvalidArgument unless 0 < offset_range < 0.5, batch_size >= 1,
  /// iterations >= 1 and 0 < holdout_fraction < 1.
  void validate() const;
};

struct PatchSource {
  std::size_t image = 0;
  std::size_t x = 0;
  std::size_t y = 0;
};

struct PatchSet {
  std::vector<ImageRGB> patches;
  std::vector<PatchSource> sources;
};

struct TrainLogEntry {
  std::size_t iteration = 0;  // 1-based
  double loss = 0.0;
  std::optional<double> holdout_loss;
  double millis = 0.0;
};

struct TrainLog {
  double initial_holdout_loss = 0.0;
  std::vector<TrainLogEntry> entries;

  double final_holdout_loss() const;
};

/// iteration,loss,holdout_loss,millis with a blank holdout field when absent.
void write_train_log_csv(const TrainLog& log, std::ostream& out);

struct SynthesizedPair {
  ImageRGB source;
  float eps1 = 0.0f;
  float eps2 = 0.0f;
};

/// Adds eps1 to R and eps2 to B; G is copied bit-exactly. No clamping.
ImageRGB perturb_channels(const ImageRGB& target, float eps1, float eps2);

/// Draws eps1 then eps2 from Unif(-range, range) and perturbs the target.
SynthesizedPair synthesize_pair(const ImageRGB& target, Rng& rng, float range);

inline constexpr double kTissueLuminanceLimit = 0.9;

/// `count` patches at uniform random positions (image chosen uniformly, then
/// x, then y). Patches brighter than kTissueLuminanceLimit are redrawn; at
/// most 100 * count draws are made in total.
PatchSet sample_patches(const std::vector<ImageRGB>& images, std::size_t count, std::size_t size, Rng& rng);

struct TrainResult {
  Model model;
  TrainLog log;
};

/// Self-supervised training from a freshly built reference model. Fully
/// deterministic under cfg.seed. The returned model is in infer mode.
TrainResult train(const PatchSet& patches, const TrainConfig& cfg);

/// Same, starting from `initial` (which is switched to train mode).
TrainResult train(Model initial, const PatchSet& patches, const TrainConfig& cfg);

/// Deterministic holdout split used by train(): returns (train, holdout)
/// patch indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(std::size_t count, double fraction,
                                                                            Rng& rng);

struct OffsetRecovery {
  std::array<double, 3> mae{};  // R, G, B
  std::size_t trials = 0;
};

/// For each trial perturbs a random patch with known (eps1, eps2), predicts
/// the offset field in infer mode and reduces it to per-channel spatial means,
/// which should approximate (-eps1, 0, -eps2). offset_range == 0 means no
/// perturbation.
OffsetRecovery evaluate_offset_recovery(const Model& model, const PatchSet& patches, std::size_t trials, Rng& rng,
                                        float offset_range = 0.2f);

}  // namespace colornorm
