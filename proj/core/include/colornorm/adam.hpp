#pragma once

#include <cstdint>
#include <vector>

#include "colornorm/parameters.hpp"

namespace colornorm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
};

/// One bias-corrected Adam update. Moments are allocated on the first call.
/// Throws NonFinite (naming the parameter) before touching anything if a
/// gradient holds NaN/inf, ShapeMismatch if shapes disagree.
template <typename T>
void adam_step(const std::vector<ParamRef<T>>& params, const Gradients<T>& grads, AdamState<T>& state);

}  // namespace colornorm
