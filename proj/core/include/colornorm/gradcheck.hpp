#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "colornorm/rng.hpp"

namespace colornorm {

struct GradCheckOptions {
  std::size_t samples = 200;  // coordinates checked (all if fewer exist)
  double step = 1e-5;         // central-difference half step
  double floor = 1e-8;        // denominator floor of the relative error
};

struct GradCheckSample {
  std::string block;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<block>[<index>]" of the worst coordinate
  std::vector<GradCheckSample> samples;
};

/// A group of 64-bit variables the objective reads, with the analytic
/// gradient at the unperturbed point.
struct GradCheckBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

/// Compares analytic gradients with central differences of `loss` over a
/// random subset of coordinates; returns max |a-n| / max(|a|, |n|, floor).
GradCheckResult gradient_check(const std::function<double()>& loss, const std::vector<GradCheckBlock>& blocks,
                               Rng& rng, const GradCheckOptions& options = {});

// Layer-level checks, each run in 64-bit against a random linear probe
// objective <layer(x), v>.
GradCheckResult check_conv2d(std::size_t dilation, Rng& rng);
GradCheckResult check_batchnorm(Rng& rng);
GradCheckResult check_leaky_relu(Rng& rng);
GradCheckResult check_concat(Rng& rng);
GradCheckResult check_loss(Rng& rng);

/// Analytic gradients of the 32-bit reference model on a random 8x8 batch
/// against 64-bit central differences of the same weights.
GradCheckResult check_model_end_to_end(Rng& rng, std::size_t samples = 400);

struct GradSuiteEntry {
  std::string name;
  GradCheckResult result;
  double tolerance = 0.0;
  bool passed() const { return result.max_rel_error < tolerance; }
};

/// The full suite: conv (dilations 1, 2, 4), batchnorm, leaky ReLU, concat,
/// loss (tolerance 1e-4) and end-to-end model (tolerance 1e-3).
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 2024);

}  // namespace colornorm
