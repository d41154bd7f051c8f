#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "colornorm/image.hpp"
#include "colornorm/model.hpp"

namespace colornorm {

enum class OffsetMode { Global, Pixel };

OffsetMode parse_offset_mode(const std::string& name);
std::string to_string(OffsetMode mode);

struct InferenceOptions {
  OffsetMode mode = OffsetMode::Global;
  // Images above this many pixels are processed tile by tile.
  std::size_t max_pass_pixels = 64'000'000;
  std::size_t tile_size = 1024;
  unsigned threads = 1;
};

/// Region of the image fed to one forward pass (`x`,`y`,`width`,`height`)
/// and the part of its output that is kept (`crop_*`, image coordinates).
struct InferenceWindow {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  std::size_t crop_x = 0, crop_y = 0, crop_width = 0, crop_height = 0;
};

/// One window for the whole image when it fits in a single pass; otherwise
/// one per tile, each grown by `halo` pixels of real image context (clipped
/// at the image border). Since every kept output pixel sees exactly the
/// same inputs as in a full-image pass, tiled and untiled results agree
/// bit for bit.
std::vector<InferenceWindow> plan_windows(std::size_t width, std::size_t height, std::size_t halo,
                                          const InferenceOptions& options);

/// Infer-mode forward pass specialised for single images: batch norm is
/// folded into a per-channel affine map and each dense block works in one
/// zero-margined 12-plane buffer instead of concatenating.
class InferenceEngine {
 public:
  /// Throws InvalidArgument unless `model` is in infer mode.
  explicit InferenceEngine(const Model& model);

  std::size_t halo() const noexcept { return halo_; }

  /// Planar (3, h, w) offset field of one window.
  std::vector<float> window_offsets(const ImageRGB& image, const InferenceWindow& window, unsigned threads) const;

  /// Full-resolution offset field, interleaved like ImageRGB (not clamped).
  ImageRGB offsets(const ImageRGB& image, const InferenceOptions& options) const;

  /// Per-channel spatial mean of the offset field over real image pixels.
  std::vector<double> mean_offset(const ImageRGB& image, const InferenceOptions& options) const;

  ImageRGB normalize(const ImageRGB& image, const InferenceOptions& options) const;

 private:
  struct Layer {
    std::vector<float> weights;
    std::vector<float> bias;
    std::vector<float> scale;  // folded batch norm; empty for the head
    std::vector<float> shift;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t dilation = 1;
  };

  void run_layer(const Layer& layer, const float* in, float* out, const detail::PaddedLayout& layout,
                 unsigned threads) const;

  std::vector<std::vector<Layer>> blocks_;
  Layer head_;
  float slope_ = 0.01f;
  std::size_t halo_ = 0;
  std::size_t pad_ = 0;  // widest single-layer reach
};

/// clamp(image + offset, 0, 1) where the offset is the per-channel mean of
/// the predicted field (global) or the field itself (pixel).
ImageRGB normalize_colornormnet(const Model& model, const ImageRGB& image, const InferenceOptions& options = {});

}  // namespace colornorm
