#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "colornorm/tensor.hpp"

namespace colornorm {

enum class Mode { Train, Infer };

/// Same-padded, dilated 2-D convolution parameters.
/// weights are (out, in, k, k), bias is (out); k must be odd.
template <typename T>
struct ConvParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;
  std::size_t dilation = 1;

  static ConvParams zeros(std::size_t out_ch, std::size_t in_ch, std::size_t kernel, std::size_t dilation);

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel() const { return weights.dim(2); }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }

  /// Throws InvalidArgument on an even/non-square kernel, zero dilation or a
  /// bias of the wrong length.
  void validate() const;

  template <typename U>
  ConvParams<U> cast() const {
    return {weights.template cast<U>(), bias.template cast<U>(), dilation};
  }
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

/// out[n,o,y,x] = bias[o] + sum_{c,i,j} w[o,c,i,j] * in[n,c,y+d(i-r),x+d(j-r)],
/// r = (k-1)/2, out-of-range taps contribute nothing. H and W are preserved.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& params, unsigned threads = 1);

/// Exact adjoint of conv2d_forward. The input gradient is skipped (left as a
/// scalar) when need_input_grad is false.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& params,
                             const BasicTensor<T>& grad_out, bool need_input_grad = true);

template <typename T>
struct BatchNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  /// gamma = 1, beta = 0, running_mean = 0, running_var = 1.
  static BatchNormParams identity(std::size_t channels);

  std::size_t channels() const { return gamma.size(); }
  std::size_t parameter_count() const { return gamma.size() + beta.size(); }

  template <typename U>
  BatchNormParams<U> cast() const {
    return {gamma.template cast<U>(),        beta.template cast<U>(),
            running_mean.template cast<U>(), running_var.template cast<U>(),
            eps,                             momentum};
  }
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::Infer;
  BasicTensor<T> normalized;
  std::vector<double> inv_std;
  std::vector<double> gamma;
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

/// Per-channel scale/shift equivalent of inference-mode batch norm:
/// y = x * scale + shift.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> batchnorm_affine(const BatchNormParams<T>& params);

/// Train mode normalizes with biased batch statistics and updates the
/// running statistics in place; infer mode uses the running statistics.
template <typename T>
std::pair<BasicTensor<T>, BatchNormCache<T>> batchnorm_forward(const BasicTensor<T>& input,
                                                               BatchNormParams<T>& params, Mode mode);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> leaky_relu_forward(const BasicTensor<T>& input, double slope);

/// Derivative taken as 1 at x == 0.
template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, double slope);

template <typename T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T>*>& parts);

/// Inverse of concat_channels: slices `whole` into consecutive channel groups.
template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& whole, const std::vector<std::size_t>& channels);

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;
};

/// mean|d| + lambda * mean(d^2) with d = pred - target; gradient uses sign(0) = 0.
template <typename T>
LossResult<T> loss_l1l2(const BasicTensor<T>& pred, const BasicTensor<T>& target, double lambda);

namespace detail {

/// Computes output rows [row_begin, row_end) of one (C,H,W) image into the
/// (O,H,W) planes at `out`. `scratch` is caller-owned working memory.
template <typename T>
void conv_rows(const T* in, std::size_t channels, std::size_t height, std::size_t width, const T* weights,
               const T* bias, std::size_t out_channels, std::size_t kernel, std::size_t dilation, T* out,
               std::size_t row_begin, std::size_t row_end, std::vector<T>& scratch);

inline constexpr std::size_t kConvChunk = 16;

/// Channel planes of height x width stored with `pad` zero rows above and
/// below and `pad` zero columns left and right, rows `stride` apart. The
/// right margin also covers rounding width up to whole kConvChunk chunks.
struct PaddedLayout {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t pad = 0;
  std::size_t stride = 0;

  PaddedLayout() = default;
  PaddedLayout(std::size_t h, std::size_t w, std::size_t p)
      : height(h), width(w), pad(p), stride((w + kConvChunk - 1) / kConvChunk * kConvChunk + 2 * p) {}
  std::size_t plane() const noexcept { return (height + 2 * pad) * stride; }
  std::size_t offset(std::size_t x, std::size_t y) const noexcept { return (y + pad) * stride + pad + x; }
};

/// conv_rows on padded planes: reads `in` directly (no row copies) and
/// writes only the image area of the (O) planes at `out`, leaving the zero
/// margins intact. Requires layout.pad >= dilation * (kernel - 1) / 2.
template <typename T>
void conv_rows_padded(const T* in, std::size_t channels, const PaddedLayout& layout, const T* weights,
                      const T* bias, std::size_t out_channels, std::size_t kernel, std::size_t dilation, T* out,
                      std::size_t row_begin, std::size_t row_end);

}  // namespace detail

}  // namespace colornorm
