#include "colornorm/inference.hpp"

#include <algorithm>
#include <cstring>

#include "colornorm/error.hpp"
#include "colornorm/exact_sum.hpp"
#include "colornorm/parallel.hpp"

namespace colornorm {

OffsetMode parse_offset_mode(const std::string& name) {
  if (name == "global") return OffsetMode::Global;
  if (name == "pixel") return OffsetMode::Pixel;
  fail(ErrorCode::InvalidArgument, "unknown offset mode '" + name + "' (valid: global, pixel)");
}

std::string to_string(OffsetMode mode) { return mode == OffsetMode::Global ? "global" : "pixel"; }

std::vector<InferenceWindow> plan_windows(std::size_t width, std::size_t height, std::size_t halo,
                                          const InferenceOptions& options) {
  if (width == 0 || height == 0) fail(ErrorCode::InvalidArgument, "empty image");
  if (options.tile_size == 0) fail(ErrorCode::InvalidArgument, "tile_size must be >= 1");
  if (options.max_pass_pixels == 0) fail(ErrorCode::InvalidArgument, "max_pass_pixels must be >= 1");
  if (width * height <= options.max_pass_pixels) {
    return {{0, 0, width, height, 0, 0, width, height}};
  }
  const std::size_t ts = options.tile_size;
  std::vector<InferenceWindow> windows;
  for (std::size_t ty = 0; ty < height; ty += ts) {
    for (std::size_t tx = 0; tx < width; tx += ts) {
      InferenceWindow w;
      w.crop_x = tx;
      w.crop_y = ty;
      w.crop_width = std::min(ts, width - tx);
      w.crop_height = std::min(ts, height - ty);
      w.x = tx > halo ? tx - halo : 0;
      w.y = ty > halo ? ty - halo : 0;
      w.width = std::min(width, tx + w.crop_width + halo) - w.x;
      w.height = std::min(height, ty + w.crop_height + halo) - w.y;
      windows.push_back(w);
    }
  }
  return windows;
}

InferenceEngine::InferenceEngine(const Model& model) {
  if (model.mode() != Mode::Infer) fail(ErrorCode::InvalidArgument, "inference requires a model in infer mode");
  const ArchSpec& spec = model.spec();
  slope_ = static_cast<float>(spec.lrelu_slope);
  halo_ = spec.halo();
  pad_ = 0;
  for (const auto& block : model.blocks()) {
    std::vector<Layer> layers;
    for (const auto& dl : block) {
      Layer l;
      l.weights.assign(dl.conv.weights.data().begin(), dl.conv.weights.data().end());
      l.bias.assign(dl.conv.bias.data().begin(), dl.conv.bias.data().end());
      std::tie(l.scale, l.shift) = batchnorm_affine(dl.bn);
      l.in_channels = dl.conv.in_channels();
      l.out_channels = dl.conv.out_channels();
      l.kernel = dl.conv.kernel();
      l.dilation = dl.conv.dilation;
      pad_ = std::max(pad_, l.dilation * ((l.kernel - 1) / 2));
      layers.push_back(std::move(l));
    }
    blocks_.push_back(std::move(layers));
  }
  const ConvParams<float>& h = model.head();
  head_.weights.assign(h.weights.data().begin(), h.weights.data().end());
  head_.bias.assign(h.bias.data().begin(), h.bias.data().end());
  head_.in_channels = h.in_channels();
  head_.out_channels = h.out_channels();
  head_.kernel = h.kernel();
  head_.dilation = h.dilation;
  pad_ = std::max(pad_, head_.dilation * ((head_.kernel - 1) / 2));
}

void InferenceEngine::run_layer(const Layer& layer, const float* in, float* out,
                                const detail::PaddedLayout& layout, unsigned threads) const {
  parallel_for(0, layout.height, threads, [&](std::size_t lo, std::size_t hi) {
    detail::conv_rows_padded(in, layer.in_channels, layout, layer.weights.data(), layer.bias.data(),
                             layer.out_channels, layer.kernel, layer.dilation, out, lo, hi);
    if (layer.scale.empty()) return;
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
      const float scale = layer.scale[o], shift = layer.shift[o];
      for (std::size_t y = lo; y < hi; ++y) {
        float* p = out + o * layout.plane() + layout.offset(0, y);
        for (std::size_t x = 0; x < layout.width; ++x) {
          const float v = p[x] * scale + shift;
          p[x] = v >= 0.0f ? v : slope_ * v;
        }
      }
    }
  });
}

std::vector<float> InferenceEngine::window_offsets(const ImageRGB& image, const InferenceWindow& win,
                                                   unsigned threads) const {
  if (win.x + win.width > image.width || win.y + win.height > image.height || win.width == 0 || win.height == 0) {
    fail(ErrorCode::InvalidArgument, "inference window outside the image");
  }
  const std::size_t h = win.height, w = win.width;
  const detail::PaddedLayout layout(h, w, pad_);
  const std::size_t plane = layout.plane();

  // Every feature of a block lives in one zero-margined buffer, so a layer's
  // input is simply the planes written before it.
  std::size_t widest = 0;
  for (const auto& block : blocks_) {
    std::size_t total = block.front().in_channels;
    for (const auto& l : block) total += l.out_channels;
    widest = std::max(widest, total);
  }
  std::vector<float> buffer(widest * plane, 0.0f);
  for (std::size_t r = 0; r < h; ++r) {
    const float* src = image.ptr(win.x, win.y + r);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      float* dst = buffer.data() + ch * plane + layout.offset(0, r);
      for (std::size_t c = 0; c < w; ++c) dst[c] = src[3 * c + ch];
    }
  }
  std::size_t channels = 3;
  for (const auto& block : blocks_) {
    std::size_t filled = channels;
    for (const auto& l : block) {
      run_layer(l, buffer.data(), buffer.data() + filled * plane, layout, threads);
      filled += l.out_channels;
    }
    // The block output becomes the next block's input planes.
    const std::size_t out_ch = block.back().out_channels;
    std::memmove(buffer.data(), buffer.data() + (filled - out_ch) * plane, out_ch * plane * sizeof(float));
    channels = out_ch;
  }
  std::vector<float> field(head_.out_channels * plane, 0.0f);
  run_layer(head_, buffer.data(), field.data(), layout, threads);

  std::vector<float> offsets(head_.out_channels * h * w);
  for (std::size_t ch = 0; ch < head_.out_channels; ++ch) {
    for (std::size_t r = 0; r < h; ++r) {
      std::memcpy(offsets.data() + (ch * h + r) * w, field.data() + ch * plane + layout.offset(0, r), w * sizeof(float));
    }
  }
  return offsets;
}

ImageRGB InferenceEngine::offsets(const ImageRGB& image, const InferenceOptions& options) const {
  ImageRGB out(image.width, image.height);
  for (const InferenceWindow& win : plan_windows(image.width, image.height, halo_, options)) {
    const std::vector<float> field = window_offsets(image, win, options.threads);
    const std::size_t plane = win.width * win.height;
    for (std::size_t r = 0; r < win.crop_height; ++r) {
      const std::size_t wy = win.crop_y + r - win.y;
      float* dst = out.ptr(win.crop_x, win.crop_y + r);
      for (std::size_t c = 0; c < win.crop_width; ++c) {
        const std::size_t wx = win.crop_x + c - win.x;
        for (std::size_t ch = 0; ch < 3; ++ch) dst[3 * c + ch] = field[ch * plane + wy * win.width + wx];
      }
    }
  }
  return out;
}

std::vector<double> InferenceEngine::mean_offset(const ImageRGB& image, const InferenceOptions& options) const {
  ExactSum sums[3];
  for (const InferenceWindow& win : plan_windows(image.width, image.height, halo_, options)) {
    const std::vector<float> field = window_offsets(image, win, options.threads);
    const std::size_t plane = win.width * win.height;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      for (std::size_t r = 0; r < win.crop_height; ++r) {
        const float* row = field.data() + ch * plane + (win.crop_y + r - win.y) * win.width + (win.crop_x - win.x);
        for (std::size_t c = 0; c < win.crop_width; ++c) sums[ch].add(row[c]);
      }
    }
  }
  const auto n = static_cast<double>(image.pixel_count());
  return {sums[0].value() / n, sums[1].value() / n, sums[2].value() / n};
}

ImageRGB InferenceEngine::normalize(const ImageRGB& image, const InferenceOptions& options) const {
  ImageRGB out(image.width, image.height);
  if (options.mode == OffsetMode::Global) {
    const std::vector<double> mean = mean_offset(image, options);
    const float off[3] = {static_cast<float>(mean[0]), static_cast<float>(mean[1]), static_cast<float>(mean[2])};
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
      out.pixels[i] = std::clamp(image.pixels[i] + off[i % 3], 0.0f, 1.0f);
    }
    return out;
  }
  const ImageRGB field = offsets(image, options);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[i] = std::clamp(image.pixels[i] + field.pixels[i], 0.0f, 1.0f);
  }
  return out;
}

ImageRGB normalize_colornormnet(const Model& model, const ImageRGB& image, const InferenceOptions& options) {
  return InferenceEngine(model).normalize(image, options);
}

}  // namespace colornorm
