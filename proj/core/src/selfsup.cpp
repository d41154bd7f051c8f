#include "colornorm/selfsup.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "colornorm/adam.hpp"
#include "colornorm/error.hpp"

namespace colornorm {

void TrainConfig::validate() const {
  if (!(offset_range > 0.0 && offset_range < 0.5)) fail(ErrorCode::InvalidArgument, "offset_range must lie in (0, 0.5)");
  if (batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (iterations < 1) fail(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (patch_size < 1) fail(ErrorCode::InvalidArgument, "patch_size must be >= 1");
  if (!(lr > 0.0)) fail(ErrorCode::InvalidArgument, "lr must be positive");
  if (!(lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be non-negative");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "holdout_fraction must lie in (0, 1)");
  }
  if (holdout_every < 1) fail(ErrorCode::InvalidArgument, "holdout_every must be >= 1");
}

double TrainLog::final_holdout_loss() const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->holdout_loss) return *it->holdout_loss;
  }
  return initial_holdout_loss;
}

void write_train_log_csv(const TrainLog& log, std::ostream& out) {
  out << "iteration,loss,holdout_loss,millis\n";
  out << std::setprecision(9);
  for (const auto& e : log.entries) {
    out << e.iteration << ',' << e.loss << ',';
    if (e.holdout_loss) out << *e.holdout_loss;
    out << ',' << std::fixed << std::setprecision(3) << e.millis << std::defaultfloat << std::setprecision(9) << '\n';
  }
}

ImageRGB perturb_channels(const ImageRGB& target, float eps1, float eps2) {
  ImageRGB source = target;
  for (std::size_t i = 0; i < source.pixel_count(); ++i) {
    source.pixels[3 * i] += eps1;
    source.pixels[3 * i + 2] += eps2;
  }
  return source;
}

SynthesizedPair synthesize_pair(const ImageRGB& target, Rng& rng, float range) {
  const float eps1 = rng.uniform(-range, range);
  const float eps2 = rng.uniform(-range, range);
  return {perturb_channels(target, eps1, eps2), eps1, eps2};
}

PatchSet sample_patches(const std::vector<ImageRGB>& images, std::size_t count, std::size_t size, Rng& rng) {
  if (images.empty()) fail(ErrorCode::InvalidArgument, "no images to sample patches from");
  if (size < 1) fail(ErrorCode::InvalidArgument, "patch size must be >= 1");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width < size || images[i].height < size) {
      fail(ErrorCode::InvalidArgument, "image " + std::to_string(i) + " (" + std::to_string(images[i].width) + "x" +
                                           std::to_string(images[i].height) + ") is smaller than patch size " +
                                           std::to_string(size));
    }
  }
  PatchSet set;
  const std::size_t budget = 100 * count;
  std::size_t attempts = 0;
  while (set.patches.size() < count) {
    if (attempts == budget) {
      std::ostringstream msg;
      msg << "accepted " << set.patches.size() << " of " << attempts << " candidate patches (acceptance rate "
          << std::setprecision(3) << 100.0 * static_cast<double>(set.patches.size()) / static_cast<double>(attempts)
          << "%), needed " << count;
      fail(ErrorCode::RejectionBudgetExhausted, msg.str());
    }
    ++attempts;
    const std::size_t idx = rng.below(images.size());
    const ImageRGB& img = images[idx];
    const std::size_t x = rng.below(img.width - size + 1);
    const std::size_t y = rng.below(img.height - size + 1);
    ImageRGB patch(size, size);
    for (std::size_t r = 0; r < size; ++r) {
      std::copy_n(img.ptr(x, y + r), 3 * size, patch.ptr(0, r));
    }
    if (mean_luminance(patch) > kTissueLuminanceLimit) continue;
    set.patches.push_back(std::move(patch));
    set.sources.push_back({idx, x, y});
  }
  return set;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(std::size_t count, double fraction,
                                                                            Rng& rng) {
  if (count < 2) fail(ErrorCode::InvalidArgument, "need at least 2 patches to split off a holdout set");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  auto holdout = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
  holdout = std::clamp<std::size_t>(holdout, 1, count - 1);
  std::vector<std::size_t> held(order.end() - static_cast<std::ptrdiff_t>(holdout), order.end());
  order.resize(count - holdout);
  return {std::move(order), std::move(held)};
}

namespace {

struct HoldoutSet {
  std::vector<Tensor> sources;  // chunks of at most batch_size patches
  std::vector<Tensor> targets;
};

HoldoutSet build_holdout(const PatchSet& patches, const std::vector<std::size_t>& indices, std::size_t chunk,
                         float range, Rng& rng) {
  HoldoutSet set;
  const std::size_t size = patches.patches.front().width;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::size_t n = std::min(chunk, indices.size() - start);
    Tensor src({n, 3, size, size});
    Tensor tgt({n, 3, size, size});
    for (std::size_t k = 0; k < n; ++k) {
      const ImageRGB& target = patches.patches[indices[start + k]];
      copy_to_batch(synthesize_pair(target, rng, range).source, src, k);
      copy_to_batch(target, tgt, k);
    }
    set.sources.push_back(std::move(src));
    set.targets.push_back(std::move(tgt));
  }
  return set;
}

double holdout_loss(Model& model, const HoldoutSet& set, double lambda) {
  const Mode saved = model.mode();
  model.set_mode(Mode::Infer);
  double weighted = 0.0;
  std::size_t total = 0;
  for (std::size_t c = 0; c < set.sources.size(); ++c) {
    const Tensor offsets = model.forward(set.sources[c]);
    const double loss = loss_l1l2(add(set.sources[c], offsets), set.targets[c], lambda).value;
    weighted += loss * static_cast<double>(set.sources[c].size());
    total += set.sources[c].size();
  }
  model.set_mode(saved);
  return weighted / static_cast<double>(total);
}

void check_patches(const PatchSet& patches) {
  if (patches.patches.empty()) fail(ErrorCode::InvalidArgument, "empty patch set");
  const std::size_t w = patches.patches.front().width, h = patches.patches.front().height;
  if (w != h) fail(ErrorCode::InvalidArgument, "patches must be square");
  for (const auto& p : patches.patches) {
    if (p.width != w || p.height != h) fail(ErrorCode::InvalidArgument, "patches must share one size");
  }
}

// Stream layout shared by both train() overloads: the first split seeds the
// initial weights, then the holdout split, holdout epsilons and batches.
struct TrainStreams {
  Rng init;
  Rng split;
  Rng holdout;
  Rng batches;

  explicit TrainStreams(std::uint64_t seed) : TrainStreams(Rng(seed)) {}

 private:
  explicit TrainStreams(Rng root) : init(root.split()), split(root.split()), holdout(root.split()), batches(root.split()) {}
};

TrainResult train_impl(Model model, const PatchSet& patches, const TrainConfig& cfg, TrainStreams& streams) {
  cfg.validate();
  check_patches(patches);
  if (patches.patches.size() < cfg.batch_size) {
    fail(ErrorCode::InvalidArgument, "patch count " + std::to_string(patches.patches.size()) +
                                         " is below batch size " + std::to_string(cfg.batch_size));
  }
  const auto range = static_cast<float>(cfg.offset_range);
  const auto [train_idx, held_idx] = split_holdout(patches.patches.size(), cfg.holdout_fraction, streams.split);
  const HoldoutSet holdout = build_holdout(patches, held_idx, cfg.batch_size, range, streams.holdout);

  model.set_mode(Mode::Train);
  AdamState<float> adam;
  adam.config.lr = cfg.lr;

  TrainResult result{model, {}};
  Model& net = result.model;
  result.log.initial_holdout_loss = holdout_loss(net, holdout, cfg.lambda);

  const std::size_t size = patches.patches.front().width;
  Tensor input({cfg.batch_size, 3, size, size});
  Tensor target({cfg.batch_size, 3, size, size});
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const ImageRGB& patch = patches.patches[train_idx[streams.batches.below(train_idx.size())]];
      Rng child = streams.batches.split();
      copy_to_batch(synthesize_pair(patch, child, range).source, input, k);
      copy_to_batch(patch, target, k);
    }
    ForwardBackwardResult<float> step = net.forward_backward(input, target, cfg.lambda);
    if (!std::isfinite(step.loss)) {
      fail(ErrorCode::NonFinite, "non-finite training loss at iteration " + std::to_string(it));
    }
    adam_step(net.parameters(), step.grads, adam);

    TrainLogEntry entry{it, step.loss, std::nullopt, 0.0};
    if (it % cfg.holdout_every == 0 || it == cfg.iterations) {
      const double h = holdout_loss(net, holdout, cfg.lambda);
      if (!std::isfinite(h)) fail(ErrorCode::NonFinite, "non-finite holdout loss at iteration " + std::to_string(it));
      entry.holdout_loss = h;
    }
    entry.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.entries.push_back(entry);
  }
  net.set_mode(Mode::Infer);
  return result;
}

}  // namespace

TrainResult train(const PatchSet& patches, const TrainConfig& cfg) {
  TrainStreams streams(cfg.seed);
  Model initial = build_model(ArchSpec::reference(), streams.init);
  return train_impl(std::move(initial), patches, cfg, streams);
}

TrainResult train(Model initial, const PatchSet& patches, const TrainConfig& cfg) {
  TrainStreams streams(cfg.seed);
  return train_impl(std::move(initial), patches, cfg, streams);
}

OffsetRecovery evaluate_offset_recovery(const Model& model, const PatchSet& patches, std::size_t trials, Rng& rng,
                                        float offset_range) {
  check_patches(patches);
  Model net = model;
  net.set_mode(Mode::Infer);
  constexpr std::size_t kChunk = 32;
  const std::size_t size = patches.patches.front().width;
  const double plane = static_cast<double>(size * size);

  std::array<double, 3> abs_error{};
  for (std::size_t start = 0; start < trials; start += kChunk) {
    const std::size_t n = std::min(kChunk, trials - start);
    Tensor batch({n, 3, size, size});
    std::vector<std::array<float, 2>> eps(n);
    for (std::size_t k = 0; k < n; ++k) {
      const ImageRGB& patch = patches.patches[rng.below(patches.patches.size())];
      if (offset_range > 0.0f) {
        SynthesizedPair pair = synthesize_pair(patch, rng, offset_range);
        eps[k] = {pair.eps1, pair.eps2};
        copy_to_batch(pair.source, batch, k);
      } else {
        eps[k] = {0.0f, 0.0f};
        copy_to_batch(patch, batch, k);
      }
    }
    const Tensor offsets = net.forward(batch);
    for (std::size_t k = 0; k < n; ++k) {
      std::array<double, 3> mean{};
      for (std::size_t c = 0; c < 3; ++c) {
        const float* p = offsets.raw() + (k * 3 + c) * size * size;
        double sum = 0.0;
        for (std::size_t i = 0; i < size * size; ++i) sum += p[i];
        mean[c] = sum / plane;
      }
      abs_error[0] += std::fabs(mean[0] + eps[k][0]);
      abs_error[1] += std::fabs(mean[1]);
      abs_error[2] += std::fabs(mean[2] + eps[k][1]);
    }
  }
  OffsetRecovery out;
  out.trials = trials;
  for (std::size_t c = 0; c < 3; ++c) out.mae[c] = trials ? abs_error[c] / static_cast<double>(trials) : 0.0;
  return out;
}

}  // namespace colornorm
