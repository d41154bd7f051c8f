#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "colornorm/image.hpp"

namespace colornorm {

// ---- Reinhard (statistics matching in Ruderman's l-alpha-beta space) ----

struct LabStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};

  bool operator==(const LabStats&) const = default;
};

/// RGB -> LMS -> log10 (floored at 1e-6) -> l-alpha-beta, in double.
std::array<double, 3> rgb_to_lab(const std::array<double, 3>& rgb) noexcept;
std::array<double, 3> lab_to_rgb(const std::array<double, 3>& lab) noexcept;

/// Interleaved l-alpha-beta planes for a whole image.
std::vector<float> rgb_to_lab(const ImageRGB& image, unsigned threads = 1);

LabStats compute_lab_stats(const ImageRGB& image, unsigned threads = 1);

/// out = (in - mean_src) * std_tgt / max(std_src, 1e-6) + mean_tgt per
/// channel, converted back to RGB and clamped to [0, 1].
ImageRGB normalize_reinhard(const ImageRGB& source, const LabStats& target, unsigned threads = 1);

// ---- Macenko (optical-density stain deconvolution) ----

inline constexpr double kMacenkoBeta = 0.15;      // OD threshold for tissue
inline constexpr double kMacenkoAlpha = 1.0;      // angle percentile
inline constexpr std::size_t kMinTissuePixels = 100;

struct StainModel {
  // Unit, nonnegative OD directions. Hematoxylin is the column with the
  // larger red component.
  std::array<double, 3> hematoxylin{};
  std::array<double, 3> eosin{};
  std::array<double, 2> max_conc{};  // 99th percentile concentration (H, E)

  bool operator==(const StainModel&) const = default;
};

/// od_c = -log10(max(I_c, 1) / 255)
std::array<float, 3> rgb_to_od(const std::array<std::uint8_t, 3>& rgb) noexcept;
/// I_c = round(255 * 10^-od_c) clamped to [0, 255]
std::array<std::uint8_t, 3> od_to_rgb(const std::array<float, 3>& od) noexcept;

/// Pixels with any OD component below kMacenkoBeta are ignored. The OD
/// covariance is accumulated from exact pair histograms, so the result does
/// not depend on pixel order or thread count. Throws InsufficientTissue or
/// DegenerateStain.
StainModel estimate_stain_macenko(const ImageRGB& image, unsigned threads = 1);

/// Re-expresses the source's stain concentrations (rescaled per stain by
/// target.max_conc / source.max_conc) with the target's stain vectors.
/// Output is quantized to 8-bit levels.
ImageRGB normalize_macenko(const ImageRGB& source, const StainModel& target, unsigned threads = 1);

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-based,
/// at least the first). Reorders `values`.
float percentile_nearest_rank(std::vector<float>& values, double p);

// JSON with a "method" tag; parsing is strict and throws MalformedFile.
std::string to_json(const LabStats& stats);
std::string to_json(const StainModel& model);
LabStats lab_stats_from_json(const std::string& text);
StainModel stain_model_from_json(const std::string& text);

}  // namespace colornorm
