#include "colornorm/layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <string>

#include "colornorm/error.hpp"
#include "colornorm/parallel.hpp"

namespace colornorm {

namespace {

constexpr std::size_t kChunk = detail::kConvChunk;

// Neumaier summation. Keeps the loss accurate to about one rounding, which
// matters when it is differenced by a finite-difference gradient check.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    comp_ += std::fabs(sum_) >= std::fabs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void require_rank4(const Shape& shape, const char* what) {
  if (shape.size() != 4) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + " must be (N,C,H,W), got " + to_string(shape));
  }
}

// Zero-padded copies of the k input rows feeding output row y, per channel.
// Row (c, i) lives at scratch[(c*k + i) * stride]; valid[i] is false when the
// source row falls outside the image.
struct RowWindow {
  std::size_t pad = 0;
  std::size_t stride = 0;
  std::array<bool, 64> valid{};
};

template <typename T>
RowWindow gather_rows(const T* in, std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
                      std::size_t dilation, std::size_t y, std::vector<T>& scratch) {
  RowWindow win;
  win.pad = dilation * ((kernel - 1) / 2);
  const std::size_t chunks = (width + kChunk - 1) / kChunk;
  win.stride = chunks * kChunk + 2 * win.pad;
  if (scratch.size() < channels * kernel * win.stride) scratch.resize(channels * kernel * win.stride);

  for (std::size_t i = 0; i < kernel; ++i) {
    const auto sy = static_cast<std::ptrdiff_t>(y + i * dilation) - static_cast<std::ptrdiff_t>(win.pad);
    win.valid[i] = sy >= 0 && sy < static_cast<std::ptrdiff_t>(height);
    if (!win.valid[i]) continue;
    for (std::size_t c = 0; c < channels; ++c) {
      T* dst = scratch.data() + (c * kernel + i) * win.stride;
      const T* src = in + (c * height + static_cast<std::size_t>(sy)) * width;
      std::fill(dst, dst + win.pad, T{0});
      std::memcpy(dst + win.pad, src, width * sizeof(T));
      std::fill(dst + win.pad + width, dst + win.stride, T{0});
    }
  }
  return win;
}

// Accumulates NO output channels at once so every input tap is loaded once.
// Per output element the summation order is always (c, i, j). row(c, i)
// gives the padded source row for tap row i, or nullptr if it lies outside
// the image; element x0 + x + j*dilation of it is the tap for output x0 + x.
template <typename T, std::size_t NO, typename RowFn>
void conv_row_group(RowFn row, std::size_t channels, std::size_t width, const T* weights, const T* bias,
                    std::size_t first_out, std::size_t kernel, std::size_t dilation, T* out_row,
                    std::size_t out_plane) {
  const std::size_t taps = kernel * kernel;
  for (std::size_t x0 = 0; x0 < width; x0 += kChunk) {
    T acc[NO][kChunk];
    for (std::size_t o = 0; o < NO; ++o) {
      for (std::size_t x = 0; x < kChunk; ++x) acc[o][x] = bias[first_out + o];
    }
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < kernel; ++i) {
        const T* r = row(c, i);
        if (r == nullptr) continue;
        r += x0;
        for (std::size_t j = 0; j < kernel; ++j) {
          const T* src = r + j * dilation;
          for (std::size_t o = 0; o < NO; ++o) {
            const T wv = weights[((first_out + o) * channels + c) * taps + i * kernel + j];
            for (std::size_t x = 0; x < kChunk; ++x) acc[o][x] += wv * src[x];
          }
        }
      }
    }
    const std::size_t n = std::min(kChunk, width - x0);
    for (std::size_t o = 0; o < NO; ++o) {
      std::memcpy(out_row + o * out_plane + x0, acc[o], n * sizeof(T));
    }
  }
}

// Groups of three: four accumulator rows spill on AVX2.
template <typename T, typename RowFn>
void conv_row(RowFn row, std::size_t channels, std::size_t width, const T* weights, const T* bias,
              std::size_t out_channels, std::size_t kernel, std::size_t dilation, T* out_row,
              std::size_t out_plane) {
  for (std::size_t og = 0; og < out_channels; og += 3) {
    T* dst = out_row + og * out_plane;
    switch (std::min<std::size_t>(3, out_channels - og)) {
      case 3:
        conv_row_group<T, 3>(row, channels, width, weights, bias, og, kernel, dilation, dst, out_plane);
        break;
      case 2:
        conv_row_group<T, 2>(row, channels, width, weights, bias, og, kernel, dilation, dst, out_plane);
        break;
      default:
        conv_row_group<T, 1>(row, channels, width, weights, bias, og, kernel, dilation, dst, out_plane);
        break;
    }
  }
}

// Zero-padded copy of one image: every channel plane becomes
// (h + 2*pad) x stride with the image at (pad, pad). stride is a multiple of
// kChunk plus 2*pad so whole chunks can be read past the right edge.
template <typename T>
std::size_t pad_planes(const T* in, std::size_t channels, std::size_t height, std::size_t width, std::size_t pad,
                       std::vector<T>& out) {
  const std::size_t stride = (width + kChunk - 1) / kChunk * kChunk + 2 * pad;
  const std::size_t rows = height + 2 * pad;
  out.assign(channels * rows * stride, T{0});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      std::memcpy(out.data() + (c * rows + y + pad) * stride + pad, in + (c * height + y) * width, width * sizeof(T));
    }
  }
  return stride;
}

constexpr std::size_t kBandRows = 8;

// Weight-gradient lanes of NO output channels for one input tap over a band
// of rows. g and a are padded planes sharing `stride`.
template <typename T, std::size_t NO>
void weight_grad_band(const T* g, std::size_t g_plane, const T* a, std::size_t stride, std::size_t chunks,
                      std::size_t rows, double* lanes, std::size_t lane_step) {
  T acc[NO][kChunk] = {};
  for (std::size_t y = 0; y < rows; ++y) {
    const T* arow = a + y * stride;
    for (std::size_t ch = 0; ch < chunks; ++ch) {
      const T* av = arow + ch * kChunk;
      for (std::size_t o = 0; o < NO; ++o) {
        const T* gv = g + o * g_plane + y * stride + ch * kChunk;
        for (std::size_t l = 0; l < kChunk; ++l) acc[o][l] += gv[l] * av[l];
      }
    }
  }
  for (std::size_t o = 0; o < NO; ++o) {
    double* dst = lanes + o * lane_step;
    for (std::size_t l = 0; l < kChunk; ++l) dst[l] += static_cast<double>(acc[o][l]);
  }
}

}  // namespace

namespace detail {

template <typename T>
void conv_rows(const T* in, std::size_t channels, std::size_t height, std::size_t width, const T* weights,
               const T* bias, std::size_t out_channels, std::size_t kernel, std::size_t dilation, T* out,
               std::size_t row_begin, std::size_t row_end, std::vector<T>& scratch) {
  const std::size_t plane = height * width;
  for (std::size_t y = row_begin; y < row_end; ++y) {
    const RowWindow win = gather_rows(in, channels, height, width, kernel, dilation, y, scratch);
    const T* rows = scratch.data();
    auto row = [&](std::size_t c, std::size_t i) -> const T* {
      return win.valid[i] ? rows + (c * kernel + i) * win.stride : nullptr;
    };
    conv_row(row, channels, width, weights, bias, out_channels, kernel, dilation, out + y * width, plane);
  }
}

template <typename T>
void conv_rows_padded(const T* in, std::size_t channels, const PaddedLayout& layout, const T* weights,
                      const T* bias, std::size_t out_channels, std::size_t kernel, std::size_t dilation, T* out,
                      std::size_t row_begin, std::size_t row_end) {
  const std::size_t r = dilation * ((kernel - 1) / 2);
  if (r > layout.pad) fail(ErrorCode::InvalidArgument, "padded layout narrower than the kernel reach");
  for (std::size_t y = row_begin; y < row_end; ++y) {
    // Image row y + i*d - r sits at padded row y + i*d - r + pad.
    const T* base = in + (y + layout.pad - r) * layout.stride + (layout.pad - r);
    auto row = [&](std::size_t c, std::size_t i) -> const T* {
      return base + c * layout.plane() + i * dilation * layout.stride;
    };
    conv_row(row, channels, layout.width, weights, bias, out_channels, kernel, dilation, out + layout.offset(0, y),
             layout.plane());
  }
}

template void conv_rows_padded<float>(const float*, std::size_t, const PaddedLayout&, const float*, const float*,
                                      std::size_t, std::size_t, std::size_t, float*, std::size_t, std::size_t);

template void conv_rows<float>(const float*, std::size_t, std::size_t, std::size_t, const float*, const float*,
                               std::size_t, std::size_t, std::size_t, float*, std::size_t, std::size_t,
                               std::vector<float>&);
template void conv_rows<double>(const double*, std::size_t, std::size_t, std::size_t, const double*,
                                const double*, std::size_t, std::size_t, std::size_t, double*, std::size_t,
                                std::size_t, std::vector<double>&);

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
ConvParams<T> ConvParams<T>::zeros(std::size_t out_ch, std::size_t in_ch, std::size_t kernel, std::size_t dilation) {
  ConvParams p{BasicTensor<T>({out_ch, in_ch, kernel, kernel}), BasicTensor<T>({out_ch}), dilation};
  p.validate();
  return p;
}

template <typename T>
void ConvParams<T>::validate() const {
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    fail(ErrorCode::InvalidArgument, "conv weights must be (out,in,k,k), got " + to_string(weights.shape()));
  }
  if (weights.dim(2) % 2 == 0) {
    fail(ErrorCode::InvalidArgument, "conv kernel size must be odd, got " + std::to_string(weights.dim(2)));
  }
  if (weights.dim(2) > 64) fail(ErrorCode::InvalidArgument, "conv kernel larger than 64");
  if (dilation < 1) fail(ErrorCode::InvalidArgument, "conv dilation must be >= 1");
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    fail(ErrorCode::InvalidArgument, "conv bias shape " + to_string(bias.shape()) + " does not match " +
                                         std::to_string(weights.dim(0)) + " output channels");
  }
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& params, unsigned threads) {
  params.validate();
  require_rank4(input.shape(), "conv input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (c != params.in_channels()) {
    fail(ErrorCode::ShapeMismatch, "conv input has " + std::to_string(c) + " channels, weights expect " +
                                       std::to_string(params.in_channels()));
  }
  const std::size_t o = params.out_channels();
  BasicTensor<T> out({n, o, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    const T* src = input.raw() + b * c * h * w;
    T* dst = out.raw() + b * o * h * w;
    parallel_for(0, h, threads, [&](std::size_t lo, std::size_t hi) {
      std::vector<T> scratch;
      detail::conv_rows(src, c, h, w, params.weights.raw(), params.bias.raw(), o, params.kernel(), params.dilation,
                        dst, lo, hi, scratch);
    });
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& params, const BasicTensor<T>& grad_out,
                             bool need_input_grad) {
  params.validate();
  require_rank4(input.shape(), "conv input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = params.out_channels(), k = params.kernel(), d = params.dilation;
  if (c != params.in_channels()) fail(ErrorCode::ShapeMismatch, "conv backward: input channel mismatch");
  require_same_shape(grad_out.shape(), Shape{n, o, h, w}, "conv backward grad_out vs forward output");

  ConvGrads<T> grads{BasicTensor<T>(), BasicTensor<T>(params.weights.shape()), BasicTensor<T>(params.bias.shape())};
  const std::size_t plane = h * w;

  for (std::size_t oc = 0; oc < o; ++oc) {
    double total = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* g = grad_out.raw() + (b * o + oc) * plane;
      for (std::size_t i = 0; i < plane; ++i) total += static_cast<double>(g[i]);
    }
    grads.bias[oc] = static_cast<T>(total);
  }

  // dL/dw[o,c,i,j] = sum_{n,y,x} g[n,o,y,x] * in[n,c,y+d(i-r),x+d(j-r)]
  // T lanes cover a band of kBandRows rows, then fold into 64-bit lanes.
  const std::size_t taps = k * k;
  const std::size_t nw = params.weights.size();
  const std::size_t pad = d * ((k - 1) / 2);
  const std::size_t chunks = (w + kChunk - 1) / kChunk;
  std::vector<double> gw(nw * kChunk, 0.0);
  std::vector<T> padded_in;
  std::vector<T> padded_g;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t stride = pad_planes(input.raw() + b * c * plane, c, h, w, pad, padded_in);
    // Same stride as the input so one index walks both.
    padded_g.assign(o * h * stride, T{0});
    for (std::size_t oc = 0; oc < o; ++oc) {
      for (std::size_t y = 0; y < h; ++y) {
        std::memcpy(padded_g.data() + (oc * h + y) * stride, grad_out.raw() + ((b * o + oc) * h + y) * w,
                    w * sizeof(T));
      }
    }
    const std::size_t in_plane = (h + 2 * pad) * stride;
    const std::size_t g_plane = h * stride;
    for (std::size_t y0 = 0; y0 < h; y0 += kBandRows) {
      const std::size_t rows = std::min(kBandRows, h - y0);
      for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const T* a = padded_in.data() + ic * in_plane + (y0 + i * d) * stride + j * d;
            for (std::size_t og = 0; og < o; og += 3) {
              const T* g = padded_g.data() + og * g_plane + y0 * stride;
              double* lanes = gw.data() + ((og * c + ic) * taps + i * k + j) * kChunk;
              const std::size_t step = c * taps * kChunk;
              switch (std::min<std::size_t>(3, o - og)) {
                case 3: weight_grad_band<T, 3>(g, g_plane, a, stride, chunks, rows, lanes, step); break;
                case 2: weight_grad_band<T, 2>(g, g_plane, a, stride, chunks, rows, lanes, step); break;
                default: weight_grad_band<T, 1>(g, g_plane, a, stride, chunks, rows, lanes, step); break;
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < nw; ++i) {
    double total = 0.0;
    for (std::size_t l = 0; l < kChunk; ++l) total += gw[i * kChunk + l];
    grads.weights[i] = static_cast<T>(total);
  }

  if (need_input_grad) {
    // Transposed correlation: same geometry with the kernel flipped and the
    // channel axes swapped.
    ConvParams<T> adjoint = ConvParams<T>::zeros(c, o, k, d);
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t ic = 0; ic < c; ++ic)
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j)
            adjoint.weights[(ic * o + oc) * taps + (k - 1 - i) * k + (k - 1 - j)] =
                params.weights[(oc * c + ic) * taps + i * k + j];
    grads.input = conv2d_forward(grad_out, adjoint);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t channels) {
  return {BasicTensor<T>({channels}, T{1}), BasicTensor<T>({channels}, T{0}), BasicTensor<T>({channels}, T{0}),
          BasicTensor<T>({channels}, T{1})};
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> batchnorm_affine(const BatchNormParams<T>& params) {
  const std::size_t ch = params.channels();
  std::vector<T> scale(ch), shift(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    const double s = static_cast<double>(params.gamma[c]) /
                     std::sqrt(static_cast<double>(params.running_var[c]) + params.eps);
    scale[c] = static_cast<T>(s);
    shift[c] = static_cast<T>(static_cast<double>(params.beta[c]) - static_cast<double>(params.running_mean[c]) * s);
  }
  return {std::move(scale), std::move(shift)};
}

template <typename T>
std::pair<BasicTensor<T>, BatchNormCache<T>> batchnorm_forward(const BasicTensor<T>& input,
                                                               BatchNormParams<T>& params, Mode mode) {
  require_rank4(input.shape(), "batchnorm input");
  const std::size_t n = input.dim(0), ch = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (ch != params.channels() || params.beta.size() != ch || params.running_mean.size() != ch ||
      params.running_var.size() != ch) {
    fail(ErrorCode::ShapeMismatch, "batchnorm parameters do not match " + std::to_string(ch) + " channels");
  }
  BasicTensor<T> out(input.shape());
  BatchNormCache<T> cache;
  cache.mode = mode;

  if (mode == Mode::Infer) {
    const auto [scale, shift] = batchnorm_affine(params);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < ch; ++c) {
        const T* src = input.raw() + (b * ch + c) * plane;
        T* dst = out.raw() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale[c] + shift[c];
      }
    }
    return {std::move(out), std::move(cache)};
  }

  const std::size_t count = n * plane;
  if (count < 2) {
    fail(ErrorCode::DegenerateBatch, "train-mode batchnorm needs at least 2 values per channel, got " +
                                         std::to_string(count));
  }
  cache.normalized = BasicTensor<T>(input.shape());
  cache.inv_std.resize(ch);
  cache.gamma.resize(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = input.raw() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += static_cast<double>(src[i]);
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = input.raw() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double dv = static_cast<double>(src[i]) - mean;
        sq += dv * dv;
      }
    }
    const double var = sq / static_cast<double>(count);
    const double inv_std = 1.0 / std::sqrt(var + params.eps);
    const double gamma = static_cast<double>(params.gamma[c]);
    const double beta = static_cast<double>(params.beta[c]);
    cache.inv_std[c] = inv_std;
    cache.gamma[c] = gamma;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (static_cast<double>(input[off + i]) - mean) * inv_std;
        cache.normalized[off + i] = static_cast<T>(xhat);
        out[off + i] = static_cast<T>(gamma * xhat + beta);
      }
    }
    const double m = params.momentum;
    params.running_mean[c] = static_cast<T>((1.0 - m) * static_cast<double>(params.running_mean[c]) + m * mean);
    params.running_var[c] = static_cast<T>((1.0 - m) * static_cast<double>(params.running_var[c]) + m * var);
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& grad_out) {
  if (cache.mode != Mode::Train) {
    fail(ErrorCode::InvalidArgument, "batchnorm backward requires a train-mode forward cache");
  }
  require_same_shape(grad_out.shape(), cache.normalized.shape(), "batchnorm backward grad_out vs forward output");
  const std::size_t n = grad_out.dim(0), ch = grad_out.dim(1), plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(n * plane);

  BatchNormGrads<T> grads{BasicTensor<T>(grad_out.shape()), BasicTensor<T>({ch}), BasicTensor<T>({ch})};
  for (std::size_t c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double dy = static_cast<double>(grad_out[off + i]);
        sum_dy += dy;
        sum_dy_xhat += dy * static_cast<double>(cache.normalized[off + i]);
      }
    }
    grads.gamma[c] = static_cast<T>(sum_dy_xhat);
    grads.beta[c] = static_cast<T>(sum_dy);
    const double k = cache.gamma[c] * cache.inv_std[c] / count;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double dy = static_cast<double>(grad_out[off + i]);
        const double xhat = static_cast<double>(cache.normalized[off + i]);
        grads.input[off + i] = static_cast<T>(k * (count * dy - sum_dy - xhat * sum_dy_xhat));
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Pointwise and structural layers

template <typename T>
BasicTensor<T> leaky_relu_forward(const BasicTensor<T>& input, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) fail(ErrorCode::InvalidArgument, "leaky ReLU slope must lie in (0,1)");
  BasicTensor<T> out(input.shape());
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] >= T{0} ? input[i] : s * input[i];
  return out;
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, double slope) {
  require_same_shape(input.shape(), grad_out.shape(), "leaky ReLU backward");
  BasicTensor<T> out(input.shape());
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] >= T{0} ? grad_out[i] : s * grad_out[i];
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T>*>& parts) {
  if (parts.empty()) fail(ErrorCode::InvalidArgument, "concat of zero tensors");
  const Shape& first = parts.front()->shape();
  require_rank4(first, "concat operand");
  std::size_t total = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    require_rank4(s, "concat operand");
    if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      fail(ErrorCode::ShapeMismatch, "concat operands disagree on N,H,W: " + to_string(first) + " vs " + to_string(s));
    }
    total += s[1];
  }
  const std::size_t n = first[0], plane = first[2] * first[3];
  BasicTensor<T> out({n, total, first[2], first[3]});
  for (std::size_t b = 0; b < n; ++b) {
    T* dst = out.raw() + b * total * plane;
    for (const auto* p : parts) {
      const std::size_t len = p->dim(1) * plane;
      std::memcpy(dst, p->raw() + b * len, len * sizeof(T));
      dst += len;
    }
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& whole, const std::vector<std::size_t>& channels) {
  require_rank4(whole.shape(), "split input");
  std::size_t total = 0;
  for (auto c : channels) total += c;
  if (total != whole.dim(1)) {
    fail(ErrorCode::ShapeMismatch, "split channel counts sum to " + std::to_string(total) + ", tensor has " +
                                       std::to_string(whole.dim(1)));
  }
  const std::size_t n = whole.dim(0), h = whole.dim(2), w = whole.dim(3), plane = h * w;
  std::vector<BasicTensor<T>> parts;
  parts.reserve(channels.size());
  for (auto c : channels) parts.emplace_back(Shape{n, c, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    const T* src = whole.raw() + b * total * plane;
    for (auto& p : parts) {
      const std::size_t len = p.dim(1) * plane;
      std::memcpy(p.raw() + b * len, src, len * sizeof(T));
      src += len;
    }
  }
  return parts;
}

template <typename T>
LossResult<T> loss_l1l2(const BasicTensor<T>& pred, const BasicTensor<T>& target, double lambda) {
  require_same_shape(pred.shape(), target.shape(), "loss prediction vs target");
  const std::size_t count = pred.size();
  const double inv = 1.0 / static_cast<double>(count);
  LossResult<T> result{0.0, BasicTensor<T>(pred.shape())};
  CompensatedSum l1, l2;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    l1.add(std::fabs(d));
    l2.add(d * d);
    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    result.grad[i] = static_cast<T>((sign + 2.0 * lambda * d) * inv);
  }
  result.value = (l1.value() + lambda * l2.value()) * inv;
  return result;
}

#define COLORNORM_INSTANTIATE_LAYERS(T)                                                                         \
  template struct ConvParams<T>;                                                                                \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvParams<T>&, unsigned);               \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&,     \
                                        bool);                                                                  \
  template struct BatchNormParams<T>;                                                                           \
  template std::pair<std::vector<T>, std::vector<T>> batchnorm_affine(const BatchNormParams<T>&);             \
  template std::pair<BasicTensor<T>, BatchNormCache<T>> batchnorm_forward(const BasicTensor<T>&,               \
                                                                          BatchNormParams<T>&, Mode);           \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> leaky_relu_forward(const BasicTensor<T>&, double);                                    \
  template BasicTensor<T> leaky_relu_backward(const BasicTensor<T>&, const BasicTensor<T>&, double);           \
  template BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T>*>&);                          \
  template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&, const std::vector<std::size_t>&); \
  template LossResult<T> loss_l1l2(const BasicTensor<T>&, const BasicTensor<T>&, double);

COLORNORM_INSTANTIATE_LAYERS(float)
COLORNORM_INSTANTIATE_LAYERS(double)

#undef COLORNORM_INSTANTIATE_LAYERS

}  // namespace colornorm
