#include "colornorm/adam.hpp"

#include <cmath>
#include <string>

#include "colornorm/error.hpp"

namespace colornorm {

template <typename T>
void adam_step(const std::vector<ParamRef<T>>& params, const Gradients<T>& grads, AdamState<T>& state) {
  if (grads.tensors.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "adam: " + std::to_string(grads.tensors.size()) + " gradients for " +
                                       std::to_string(params.size()) + " parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_same_shape(params[p].value->shape(), grads.tensors[p].shape(), ("adam " + params[p].name).c_str());
    for (T g : grads.tensors[p].data()) {
      if (!std::isfinite(g)) fail(ErrorCode::NonFinite, "non-finite gradient for parameter " + params[p].name);
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value->shape());
      state.v.emplace_back(p.value->shape());
    }
  }

  const AdamConfig& cfg = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t p = 0; p < params.size(); ++p) {
    BasicTensor<T>& theta = *params[p].value;
    const BasicTensor<T>& g = grads.tensors[p];
    BasicTensor<T>& m = state.m[p];
    BasicTensor<T>& v = state.v[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

template void adam_step(const std::vector<ParamRef<float>>&, const Gradients<float>&, AdamState<float>&);
template void adam_step(const std::vector<ParamRef<double>>&, const Gradients<double>&, AdamState<double>&);

}  // namespace colornorm
