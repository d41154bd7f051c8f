#pragma once

#include <cstddef>
#include <vector>

#include "colornorm/layers.hpp"
#include "colornorm/parameters.hpp"
#include "colornorm/rng.hpp"

namespace colornorm {

struct BlockSpec {
  std::size_t layers = 3;
  std::size_t growth = 3;
  std::size_t kernel = 3;
  std::size_t dilation = 1;

  bool operator==(const BlockSpec&) const = default;
};

struct HeadSpec {
  std::size_t kernel = 3;
  std::size_t out_channels = 3;

  bool operator==(const HeadSpec&) const = default;
};

/// Network layout: dense blocks applied in sequence, then a linear
/// convolutional head producing the 3-channel offset field.
///
/// Within a block, layer j sees the channel concatenation of the block input
/// and the outputs of layers < j; the block's output is its last layer's
/// `growth` feature maps. Each dense layer is conv -> batchnorm -> leaky ReLU.
struct ArchSpec {
  std::vector<BlockSpec> blocks;
  HeadSpec head;
  double lrelu_slope = 0.01;

  /// Four blocks of three 3x3 layers with three filters each, dilations
  /// 1, 2, 4, 1, and a 3x3 linear head.
  static ArchSpec reference();

  /// Throws InvalidArgument unless there are exactly four blocks, every layer
  /// has growth 3 and an odd kernel, blocks 2 and 3 are dilated and blocks 1
  /// and 4 are not.
  void validate() const;

  std::size_t receptive_field() const;
  std::size_t halo() const { return (receptive_field() - 1) / 2; }

  bool operator==(const ArchSpec&) const = default;
};

template <typename T>
struct DenseLayer {
  ConvParams<T> conv;
  BatchNormParams<T> bn;
};

template <typename T>
struct ForwardBackwardResult {
  double loss = 0.0;
  Gradients<T> grads;
};

template <typename T>
class BasicModel {
 public:
  static constexpr std::size_t kImageChannels = 3;

  /// Zero weights, identity batchnorm, train mode.
  explicit BasicModel(ArchSpec spec);

  const ArchSpec& spec() const noexcept { return spec_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  std::vector<std::vector<DenseLayer<T>>>& blocks() noexcept { return blocks_; }
  const std::vector<std::vector<DenseLayer<T>>>& blocks() const noexcept { return blocks_; }
  ConvParams<T>& head() noexcept { return head_; }
  const ConvParams<T>& head() const noexcept { return head_; }

  /// Trainable tensors in canonical order: per block, per layer conv weight,
  /// conv bias, bn gamma, bn beta; then head weight and head bias.
  std::vector<ParamRef<T>> parameters();

  /// Conv weights + biases and batchnorm gamma + beta.
  std::size_t parameter_count() const;

  /// Offset field for an (N,3,H,W) batch, same shape as the input. Train mode
  /// normalizes with batch statistics and updates running statistics.
  BasicTensor<T> forward(const BasicTensor<T>& input, unsigned threads = 1);

  /// loss_l1l2(input + forward(input), target, lambda) and the gradient of
  /// every trainable parameter. Requires train mode.
  ForwardBackwardResult<T> forward_backward(const BasicTensor<T>& input, const BasicTensor<T>& target,
                                            double lambda);

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> out(spec_);
    out.set_mode(mode_);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      for (std::size_t l = 0; l < blocks_[b].size(); ++l) {
        out.blocks()[b][l].conv = blocks_[b][l].conv.template cast<U>();
        out.blocks()[b][l].bn = blocks_[b][l].bn.template cast<U>();
      }
    }
    out.head() = head_.template cast<U>();
    return out;
  }

 private:
  void check_input(const BasicTensor<T>& input) const;

  ArchSpec spec_;
  Mode mode_ = Mode::Train;
  std::vector<std::vector<DenseLayer<T>>> blocks_;
  ConvParams<T> head_;
};

using Model = BasicModel<float>;
using ModelD = BasicModel<double>;

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)) drawn from `rng` in
/// canonical parameter order; zero biases, gamma 1, beta 0.
Model build_model(const ArchSpec& spec, Rng& rng);

std::size_t parameter_count(const Model& model);

extern template class BasicModel<float>;
extern template class BasicModel<double>;

}  // namespace colornorm
