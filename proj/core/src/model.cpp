#include "colornorm/model.hpp"

#include <cmath>
#include <string>
#include <tuple>

#include "colornorm/error.hpp"

namespace colornorm {

ArchSpec ArchSpec::reference() {
  ArchSpec spec;
  for (std::size_t dilation : {1, 2, 4, 1}) spec.blocks.push_back(BlockSpec{3, 3, 3, dilation});
  spec.head = HeadSpec{3, 3};
  spec.lrelu_slope = 0.01;
  return spec;
}

void ArchSpec::validate() const {
  auto bad = [](const std::string& why) { fail(ErrorCode::InvalidArgument, "invalid architecture: " + why); };
  if (blocks.size() != 4) bad("expected 4 dense blocks, got " + std::to_string(blocks.size()));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const BlockSpec& blk = blocks[b];
    const std::string where = "block " + std::to_string(b + 1);
    if (blk.layers < 1) bad(where + " has no layers");
    if (blk.growth != 3) bad(where + " growth must be 3");
    if (blk.kernel % 2 == 0) bad(where + " kernel must be odd");
    if (blk.dilation < 1) bad(where + " dilation must be >= 1");
    const bool dilated_block = b == 1 || b == 2;
    if (dilated_block && blk.dilation <= 1) bad(where + " must be dilated");
    if (!dilated_block && blk.dilation != 1) bad(where + " must not be dilated");
  }
  if (head.kernel % 2 == 0) bad("head kernel must be odd");
  if (head.out_channels != 3) bad("head must produce 3 channels");
  if (!(lrelu_slope > 0.0 && lrelu_slope < 1.0)) bad("leaky ReLU slope must lie in (0,1)");
}

std::size_t ArchSpec::receptive_field() const {
  std::size_t radius = 0;
  for (const auto& blk : blocks) radius += blk.layers * blk.dilation * ((blk.kernel - 1) / 2);
  radius += (head.kernel - 1) / 2;
  return 1 + 2 * radius;
}

template <typename T>
BasicModel<T>::BasicModel(ArchSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t in_ch = kImageChannels;
  for (const auto& blk : spec_.blocks) {
    std::vector<DenseLayer<T>> layers;
    for (std::size_t l = 0; l < blk.layers; ++l) {
      layers.push_back({ConvParams<T>::zeros(blk.growth, in_ch + l * blk.growth, blk.kernel, blk.dilation),
                        BatchNormParams<T>::identity(blk.growth)});
    }
    blocks_.push_back(std::move(layers));
    in_ch = blk.growth;
  }
  head_ = ConvParams<T>::zeros(spec_.head.out_channels, in_ch, spec_.head.kernel, 1);
}

template <typename T>
std::vector<ParamRef<T>> BasicModel<T>::parameters() {
  std::vector<ParamRef<T>> refs;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (std::size_t l = 0; l < blocks_[b].size(); ++l) {
      const std::string prefix = "block" + std::to_string(b + 1) + ".layer" + std::to_string(l + 1) + ".";
      DenseLayer<T>& layer = blocks_[b][l];
      refs.push_back({prefix + "conv.weight", &layer.conv.weights});
      refs.push_back({prefix + "conv.bias", &layer.conv.bias});
      refs.push_back({prefix + "bn.gamma", &layer.bn.gamma});
      refs.push_back({prefix + "bn.beta", &layer.bn.beta});
    }
  }
  refs.push_back({"head.weight", &head_.weights});
  refs.push_back({"head.bias", &head_.bias});
  return refs;
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t total = head_.parameter_count();
  for (const auto& block : blocks_) {
    for (const auto& layer : block) total += layer.conv.parameter_count() + layer.bn.parameter_count();
  }
  return total;
}

template <typename T>
void BasicModel<T>::check_input(const BasicTensor<T>& input) const {
  if (input.rank() != 4 || input.dim(1) != kImageChannels) {
    fail(ErrorCode::ShapeMismatch, "model input must be (N,3,H,W), got " + to_string(input.shape()));
  }
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& input, unsigned threads) {
  check_input(input);
  BasicTensor<T> x = input;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    std::vector<BasicTensor<T>> features{x};
    for (auto& layer : blocks_[b]) {
      std::vector<const BasicTensor<T>*> parts;
      for (const auto& f : features) parts.push_back(&f);
      const BasicTensor<T> z = conv2d_forward(concat_channels(parts), layer.conv, threads);
      auto normalized = batchnorm_forward(z, layer.bn, mode_).first;
      features.push_back(leaky_relu_forward(normalized, spec_.lrelu_slope));
    }
    x = std::move(features.back());
  }
  return conv2d_forward(x, head_, threads);
}

template <typename T>
ForwardBackwardResult<T> BasicModel<T>::forward_backward(const BasicTensor<T>& input, const BasicTensor<T>& target,
                                                         double lambda) {
  if (mode_ != Mode::Train) fail(ErrorCode::InvalidArgument, "forward_backward requires a train-mode model");
  check_input(input);
  require_same_shape(input.shape(), target.shape(), "model input vs target");

  struct LayerTrace {
    BasicTensor<T> input;
    BasicTensor<T> bn_out;
    BatchNormCache<T> bn_cache;
  };
  struct BlockTrace {
    std::vector<BasicTensor<T>> features;
    std::vector<LayerTrace> layers;
  };

  std::vector<BlockTrace> traces(blocks_.size());
  BasicTensor<T> x = input;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    BlockTrace& trace = traces[b];
    trace.features.push_back(x);
    for (auto& layer : blocks_[b]) {
      std::vector<const BasicTensor<T>*> parts;
      for (const auto& f : trace.features) parts.push_back(&f);
      LayerTrace lt;
      lt.input = concat_channels(parts);
      const BasicTensor<T> z = conv2d_forward(lt.input, layer.conv);
      std::tie(lt.bn_out, lt.bn_cache) = batchnorm_forward(z, layer.bn, Mode::Train);
      trace.features.push_back(leaky_relu_forward(lt.bn_out, spec_.lrelu_slope));
      trace.layers.push_back(std::move(lt));
    }
    x = trace.features.back();
  }
  const BasicTensor<T> offsets = conv2d_forward(x, head_);
  const BasicTensor<T> prediction = add(input, offsets);
  LossResult<T> loss = loss_l1l2(prediction, target, lambda);

  ForwardBackwardResult<T> result;
  result.loss = loss.value;
  for (const auto& ref : parameters()) {
    result.grads.names.push_back(ref.name);
    result.grads.tensors.emplace_back(ref.value->shape());
  }

  // prediction = input + offsets, so dL/d(offsets) == dL/d(prediction).
  ConvGrads<T> head_grads = conv2d_backward(x, head_, loss.grad);
  const std::size_t n_params = result.grads.tensors.size();
  result.grads.tensors[n_params - 2] = std::move(head_grads.weights);
  result.grads.tensors[n_params - 1] = std::move(head_grads.bias);

  BasicTensor<T> grad_block_out = std::move(head_grads.input);
  std::size_t param_base = 0;
  std::vector<std::size_t> block_base;
  for (const auto& block : blocks_) {
    block_base.push_back(param_base);
    param_base += 4 * block.size();
  }

  for (std::size_t b = blocks_.size(); b-- > 0;) {
    BlockTrace& trace = traces[b];
    const std::size_t n_layers = blocks_[b].size();
    std::vector<BasicTensor<T>> grad_features;
    for (const auto& f : trace.features) grad_features.emplace_back(f.shape());
    grad_features.back() = std::move(grad_block_out);

    for (std::size_t l = n_layers; l-- > 0;) {
      DenseLayer<T>& layer = blocks_[b][l];
      LayerTrace& lt = trace.layers[l];
      const BasicTensor<T> grad_bn = leaky_relu_backward(lt.bn_out, grad_features[l + 1], spec_.lrelu_slope);
      BatchNormGrads<T> bn_grads = batchnorm_backward(lt.bn_cache, grad_bn);
      const bool need_input = !(b == 0 && l == 0);
      ConvGrads<T> conv_grads = conv2d_backward(lt.input, layer.conv, bn_grads.input, need_input);

      const std::size_t base = block_base[b] + 4 * l;
      result.grads.tensors[base + 0] = std::move(conv_grads.weights);
      // Batch norm subtracts the batch mean of every channel, so the conv bias
      // has an exactly zero gradient. Summing bn_grads.input would only yield
      // rounding noise, which Adam would rescale into full-size steps.
      result.grads.tensors[base + 1] = BasicTensor<T>(layer.conv.bias.shape());
      result.grads.tensors[base + 2] = std::move(bn_grads.gamma);
      result.grads.tensors[base + 3] = std::move(bn_grads.beta);

      if (!need_input) continue;
      std::vector<std::size_t> widths;
      for (std::size_t f = 0; f <= l; ++f) widths.push_back(trace.features[f].dim(1));
      std::vector<BasicTensor<T>> pieces = split_channels(conv_grads.input, widths);
      for (std::size_t f = 0; f <= l; ++f) {
        T* dst = grad_features[f].raw();
        const T* src = pieces[f].raw();
        for (std::size_t i = 0; i < pieces[f].size(); ++i) dst[i] += src[i];
      }
    }
    grad_block_out = std::move(grad_features.front());
  }
  return result;
}

Model build_model(const ArchSpec& spec, Rng& rng) {
  Model model(spec);
  auto kaiming = [&rng](ConvParams<float>& conv) {
    const std::size_t fan_in = conv.in_channels() * conv.kernel() * conv.kernel();
    const auto bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    for (float& w : conv.weights.data()) w = rng.uniform(-bound, bound);
  };
  for (auto& block : model.blocks()) {
    for (auto& layer : block) kaiming(layer.conv);
  }
  kaiming(model.head());
  return model;
}

std::size_t parameter_count(const Model& model) { return model.parameter_count(); }

template class BasicModel<float>;
template class BasicModel<double>;

}  // namespace colornorm
