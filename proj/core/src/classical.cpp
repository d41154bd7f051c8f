#include "colornorm/classical.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "colornorm/error.hpp"
#include "colornorm/exact_sum.hpp"
#include "colornorm/parallel.hpp"

namespace colornorm {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

constexpr Mat3 kRgbToLms = {{{0.3811, 0.5783, 0.0402}, {0.1967, 0.7244, 0.0782}, {0.0241, 0.1288, 0.8444}}};

Mat3 invert(const Mat3& m) {
  Mat3 inv{};
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      // cofactor of (c, r)
      const int r0 = (c + 1) % 3, r1 = (c + 2) % 3, c0 = (r + 1) % 3, c1 = (r + 2) % 3;
      inv[r][c] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
    }
  }
  return inv;
}

const Mat3& lms_to_rgb_matrix() {
  static const Mat3 m = invert(kRgbToLms);
  return m;
}

Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

const std::array<float, 256>& od_table() {
  static const std::array<float, 256> table = [] {
    std::array<float, 256> t{};
    for (int v = 0; v < 256; ++v) t[v] = static_cast<float>(-std::log10(std::max(v, 1) / 255.0));
    return t;
  }();
  return table;
}

std::vector<std::uint8_t> to_bytes(const ImageRGB& image, unsigned threads) {
  std::vector<std::uint8_t> bytes(image.pixels.size());
  parallel_for(0, bytes.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) bytes[i] = to_byte(image.pixels[i]);
  });
  return bytes;
}

// Cyclic Jacobi on a symmetric 3x3 matrix. Returns eigenvalues and the
// eigenvectors as columns of `vectors`.
void jacobi_eigen(Mat3 a, Vec3& values, Mat3& vectors) {
  vectors = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 100; ++sweep) {
    const double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
    if (off < 1e-10) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  values = {a[0][0], a[1][1], a[2][2]};
}

struct OdHistogram {
  std::vector<std::uint64_t> rg, rb, gb;
  std::array<std::array<std::uint64_t, 256>, 3> single{};
  std::uint64_t count = 0;

  OdHistogram() : rg(65536), rb(65536), gb(65536) {}

  void merge(const OdHistogram& o) {
    for (std::size_t i = 0; i < 65536; ++i) {
      rg[i] += o.rg[i];
      rb[i] += o.rb[i];
      gb[i] += o.gb[i];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t v = 0; v < 256; ++v) single[c][v] += o.single[c][v];
    }
    count += o.count;
  }
};

// Largest byte value whose OD still reaches beta.
std::uint8_t tissue_byte_limit() {
  const auto& od = od_table();
  int limit = 0;
  for (int v = 0; v < 256; ++v) {
    if (od[v] >= kMacenkoBeta) limit = v;
  }
  return static_cast<std::uint8_t>(limit);
}

struct MacenkoFit {
  StainModel model;
  std::array<Vec3, 2> pinv{};   // rows of (M^T M)^-1 M^T
  std::vector<float> conc;      // (H, E) per pixel
};

MacenkoFit fit_macenko(const std::vector<std::uint8_t>& bytes, unsigned threads) {
  const auto& od = od_table();
  const std::uint8_t limit = tissue_byte_limit();
  const std::size_t pixels = bytes.size() / 3;
  const auto is_tissue = [&](const std::uint8_t* p) { return p[0] <= limit && p[1] <= limit && p[2] <= limit; };

  // Chunk boundaries are fixed so per-chunk tissue counts can place angles.
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(pixels, 1));
  const std::size_t chunk = (pixels + workers - 1) / workers;
  std::vector<OdHistogram> hists(workers);
  parallel_for(0, workers, static_cast<unsigned>(workers), [&](std::size_t wlo, std::size_t whi) {
    for (std::size_t w = wlo; w < whi; ++w) {
      OdHistogram& h = hists[w];
      for (std::size_t i = w * chunk; i < std::min(pixels, (w + 1) * chunk); ++i) {
        const std::uint8_t* p = bytes.data() + 3 * i;
        if (!is_tissue(p)) continue;
        ++h.rg[p[0] * 256 + p[1]];
        ++h.rb[p[0] * 256 + p[2]];
        ++h.gb[p[1] * 256 + p[2]];
        ++h.single[0][p[0]];
        ++h.single[1][p[1]];
        ++h.single[2][p[2]];
        ++h.count;
      }
    }
  });
  std::vector<std::uint64_t> chunk_offset(workers + 1, 0);
  for (std::size_t w = 0; w < workers; ++w) chunk_offset[w + 1] = chunk_offset[w] + hists[w].count;
  OdHistogram total = std::move(hists[0]);
  for (std::size_t w = 1; w < workers; ++w) total.merge(hists[w]);
  hists.clear();

  const std::uint64_t n = total.count;
  if (n < kMinTissuePixels) {
    fail(ErrorCode::InsufficientTissue, "found " + std::to_string(n) + " tissue pixels (OD >= " +
                                            std::to_string(kMacenkoBeta) + " in every channel), need at least " +
                                            std::to_string(kMinTissuePixels));
  }

  // Moments from the histograms, summed in a fixed order.
  Vec3 mean{};
  Mat3 second{};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t v = 0; v < 256; ++v) {
      const double cnt = static_cast<double>(total.single[c][v]);
      mean[c] += cnt * od[v];
      second[c][c] += cnt * od[v] * od[v];
    }
  }
  const std::vector<std::uint64_t>* pairs[3] = {&total.rg, &total.rb, &total.gb};
  const int pair_idx[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int k = 0; k < 3; ++k) {
    double s = 0.0;
    for (std::size_t a = 0; a < 256; ++a) {
      for (std::size_t b = 0; b < 256; ++b) {
        const std::uint64_t cnt = (*pairs[k])[a * 256 + b];
        if (cnt) s += static_cast<double>(cnt) * od[a] * od[b];
      }
    }
    second[pair_idx[k][0]][pair_idx[k][1]] = second[pair_idx[k][1]][pair_idx[k][0]] = s;
  }
  const double nd = static_cast<double>(n);
  for (double& m : mean) m /= nd;
  Mat3 cov{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) cov[i][j] = second[i][j] / nd - mean[i] * mean[j];
  }

  Vec3 values;
  Mat3 vectors;
  jacobi_eigen(cov, values, vectors);
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });
  std::array<Vec3, 2> basis{};
  for (int k = 0; k < 2; ++k) {
    for (int r = 0; r < 3; ++r) basis[k][r] = vectors[r][order[k]];
    if (basis[k][0] + basis[k][1] + basis[k][2] < 0) {
      for (double& v : basis[k]) v = -v;
    }
  }

  std::vector<float> angles(n);
  parallel_for(0, workers, static_cast<unsigned>(workers), [&](std::size_t wlo, std::size_t whi) {
    for (std::size_t w = wlo; w < whi; ++w) {
      std::size_t k = chunk_offset[w];
      for (std::size_t i = w * chunk; i < std::min(pixels, (w + 1) * chunk); ++i) {
        const std::uint8_t* p = bytes.data() + 3 * i;
        if (!is_tissue(p)) continue;
        const Vec3 o = {od[p[0]], od[p[1]], od[p[2]]};
        angles[k++] = static_cast<float>(std::atan2(dot(o, basis[1]), dot(o, basis[0])));
      }
    }
  });
  const double phi_lo = percentile_nearest_rank(angles, kMacenkoAlpha);
  const double phi_hi = percentile_nearest_rank(angles, 100.0 - kMacenkoAlpha);
  angles = {};

  auto direction = [&](double phi) {
    Vec3 v{};
    double norm = 0.0;
    for (int r = 0; r < 3; ++r) {
      v[r] = std::max(0.0, basis[0][r] * std::cos(phi) + basis[1][r] * std::sin(phi));
      norm += v[r] * v[r];
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) fail(ErrorCode::DegenerateStain, "stain direction vanishes after nonnegative projection");
    for (double& x : v) x /= norm;
    return v;
  };
  const Vec3 v_lo = direction(phi_lo), v_hi = direction(phi_hi);

  MacenkoFit fit;
  const bool lo_is_h = v_lo[0] >= v_hi[0];
  fit.model.hematoxylin = lo_is_h ? v_lo : v_hi;
  fit.model.eosin = lo_is_h ? v_hi : v_lo;

  const Vec3& h = fit.model.hematoxylin;
  const Vec3& e = fit.model.eosin;
  const double hh = dot(h, h), ee = dot(e, e), he = dot(h, e);
  const double det = hh * ee - he * he;
  if (det < 1e-6) {
    fail(ErrorCode::DegenerateStain, "stain directions are nearly parallel (cos = " + std::to_string(he) + ")");
  }
  for (int r = 0; r < 3; ++r) {
    fit.pinv[0][r] = (ee * h[r] - he * e[r]) / det;
    fit.pinv[1][r] = (hh * e[r] - he * h[r]) / det;
  }

  fit.conc.resize(2 * pixels);
  parallel_for(0, pixels, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint8_t* p = bytes.data() + 3 * i;
      const Vec3 o = {od[p[0]], od[p[1]], od[p[2]]};
      fit.conc[2 * i] = static_cast<float>(dot(fit.pinv[0], o));
      fit.conc[2 * i + 1] = static_cast<float>(dot(fit.pinv[1], o));
    }
  });
  std::vector<float> column(pixels);
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < pixels; ++i) column[i] = fit.conc[2 * i + k];
    fit.model.max_conc[k] = percentile_nearest_rank(column, 99.0);
    if (!(fit.model.max_conc[k] > 0.0)) {
      fail(ErrorCode::DegenerateStain, std::string(k == 0 ? "hematoxylin" : "eosin") +
                                           " 99th-percentile concentration is not positive");
    }
  }
  return fit;
}

template <typename T>
T require_array(const nlohmann::json& j, const char* key) {
  T out{};
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != out.size()) {
    fail(ErrorCode::MalformedFile, std::string("'") + key + "' must be an array of " + std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i].get<double>();
    if (!std::isfinite(out[i])) fail(ErrorCode::MalformedFile, std::string("non-finite value in '") + key + "'");
  }
  return out;
}

nlohmann::json parse_tagged(const std::string& text, const char* method, std::initializer_list<const char*> keys) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::MalformedFile, "expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = key == "method";
    for (const char* k : keys) known = known || key == k;
    if (!known) fail(ErrorCode::MalformedFile, "unknown key '" + key + "'");
  }
  if (!j.contains("method") || j["method"] != method) {
    fail(ErrorCode::MalformedFile, std::string("expected \"method\": \"") + method + "\"");
  }
  for (const char* k : keys) {
    if (!j.contains(k)) fail(ErrorCode::MalformedFile, std::string("missing key '") + k + "'");
  }
  return j;
}

}  // namespace

std::array<double, 3> rgb_to_lab(const std::array<double, 3>& rgb) noexcept {
  Vec3 lms = mat_vec(kRgbToLms, rgb);
  for (double& v : lms) v = std::log10(std::max(v, 1e-6));
  static const double s3 = std::sqrt(3.0), s6 = std::sqrt(6.0), s2 = std::sqrt(2.0);
  return {(lms[0] + lms[1] + lms[2]) / s3, (lms[0] + lms[1] - 2.0 * lms[2]) / s6, (lms[0] - lms[1]) / s2};
}

std::array<double, 3> lab_to_rgb(const std::array<double, 3>& lab) noexcept {
  static const double s3 = std::sqrt(3.0), s6 = std::sqrt(6.0), s2 = std::sqrt(2.0);
  const double l = lab[0] / s3, a = lab[1] / s6, b = lab[2] / s2;
  Vec3 lms = {l + a + b, l + a - b, l - 2.0 * a};
  for (double& v : lms) v = std::pow(10.0, v);
  return mat_vec(lms_to_rgb_matrix(), lms);
}

std::vector<float> rgb_to_lab(const ImageRGB& image, unsigned threads) {
  std::vector<float> lab(image.pixels.size());
  parallel_for(0, image.pixel_count(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const float* p = image.pixels.data() + 3 * i;
      const Vec3 v = rgb_to_lab(Vec3{p[0], p[1], p[2]});
      for (int c = 0; c < 3; ++c) lab[3 * i + c] = static_cast<float>(v[c]);
    }
  });
  return lab;
}

namespace {

LabStats stats_of(const std::vector<float>& lab, unsigned threads) {
  const std::size_t pixels = lab.size() / 3;
  if (pixels == 0) fail(ErrorCode::InvalidArgument, "empty image");
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, pixels);
  const std::size_t chunk = (pixels + workers - 1) / workers;

  std::vector<std::array<ExactSum, 3>> sums(workers);
  parallel_for(0, workers, static_cast<unsigned>(workers), [&](std::size_t wlo, std::size_t whi) {
    for (std::size_t w = wlo; w < whi; ++w) {
      for (std::size_t i = w * chunk; i < std::min(pixels, (w + 1) * chunk); ++i) {
        for (int c = 0; c < 3; ++c) sums[w][c].add(lab[3 * i + c]);
      }
    }
  });
  LabStats stats;
  for (int c = 0; c < 3; ++c) {
    ExactSum total;
    for (const auto& s : sums) total.merge(s[c]);
    stats.mean[c] = total.value() / static_cast<double>(pixels);
  }

  std::vector<std::array<ExactSum, 3>> squares(workers);
  parallel_for(0, workers, static_cast<unsigned>(workers), [&](std::size_t wlo, std::size_t whi) {
    for (std::size_t w = wlo; w < whi; ++w) {
      for (std::size_t i = w * chunk; i < std::min(pixels, (w + 1) * chunk); ++i) {
        for (int c = 0; c < 3; ++c) {
          const double d = lab[3 * i + c] - stats.mean[c];
          squares[w][c].add(d * d);
        }
      }
    }
  });
  for (int c = 0; c < 3; ++c) {
    ExactSum total;
    for (const auto& s : squares) total.merge(s[c]);
    stats.stddev[c] = std::sqrt(std::max(0.0, total.value() / static_cast<double>(pixels)));
  }
  return stats;
}

}  // namespace

LabStats compute_lab_stats(const ImageRGB& image, unsigned threads) { return stats_of(rgb_to_lab(image, threads), threads); }

ImageRGB normalize_reinhard(const ImageRGB& source, const LabStats& target, unsigned threads) {
  if (source.pixel_count() == 0) fail(ErrorCode::InvalidArgument, "empty source image");
  const std::vector<float> lab = rgb_to_lab(source, threads);
  const LabStats src = stats_of(lab, threads);
  Vec3 gain{};
  for (int c = 0; c < 3; ++c) gain[c] = target.stddev[c] / std::max(src.stddev[c], 1e-6);

  ImageRGB out(source.width, source.height);
  parallel_for(0, source.pixel_count(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Vec3 v{};
      for (int c = 0; c < 3; ++c) v[c] = (lab[3 * i + c] - src.mean[c]) * gain[c] + target.mean[c];
      const Vec3 rgb = lab_to_rgb(v);
      for (int c = 0; c < 3; ++c) out.pixels[3 * i + c] = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
  });
  return out;
}

std::array<float, 3> rgb_to_od(const std::array<std::uint8_t, 3>& rgb) noexcept {
  const auto& od = od_table();
  return {od[rgb[0]], od[rgb[1]], od[rgb[2]]};
}

std::array<std::uint8_t, 3> od_to_rgb(const std::array<float, 3>& od) noexcept {
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double v = std::nearbyint(255.0 * std::pow(10.0, -static_cast<double>(od[c])));
    out[c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

float percentile_nearest_rank(std::vector<float>& values, double p) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "percentile of an empty set");
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  const std::size_t idx = std::clamp<std::size_t>(rank, 1, values.size()) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

StainModel estimate_stain_macenko(const ImageRGB& image, unsigned threads) {
  return fit_macenko(to_bytes(image, threads), threads).model;
}

ImageRGB normalize_macenko(const ImageRGB& source, const StainModel& target, unsigned threads) {
  const std::vector<std::uint8_t> bytes = to_bytes(source, threads);
  const MacenkoFit fit = fit_macenko(bytes, threads);
  const double scale[2] = {target.max_conc[0] / fit.model.max_conc[0], target.max_conc[1] / fit.model.max_conc[1]};
  ImageRGB out(source.width, source.height);
  parallel_for(0, source.pixel_count(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double ch = fit.conc[2 * i] * scale[0], ce = fit.conc[2 * i + 1] * scale[1];
      std::array<float, 3> od{};
      for (int c = 0; c < 3; ++c) od[c] = static_cast<float>(target.hematoxylin[c] * ch + target.eosin[c] * ce);
      const auto rgb = od_to_rgb(od);
      for (int c = 0; c < 3; ++c) out.pixels[3 * i + c] = from_byte(rgb[c]);
    }
  });
  return out;
}

std::string to_json(const LabStats& stats) {
  return nlohmann::json{{"method", "reinhard"}, {"mean", stats.mean}, {"std", stats.stddev}}.dump(2);
}

std::string to_json(const StainModel& model) {
  return nlohmann::json{{"method", "macenko"},
                        {"hematoxylin", model.hematoxylin},
                        {"eosin", model.eosin},
                        {"max_conc", model.max_conc}}
      .dump(2);
}

LabStats lab_stats_from_json(const std::string& text) {
  const nlohmann::json j = parse_tagged(text, "reinhard", {"mean", "std"});
  try {
    LabStats s;
    s.mean = require_array<std::array<double, 3>>(j, "mean");
    s.stddev = require_array<std::array<double, 3>>(j, "std");
    for (double v : s.stddev) {
      if (v < 0.0) fail(ErrorCode::MalformedFile, "standard deviations must be >= 0");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string("reinhard stats: ") + e.what());
  }
}

StainModel stain_model_from_json(const std::string& text) {
  const nlohmann::json j = parse_tagged(text, "macenko", {"hematoxylin", "eosin", "max_conc"});
  try {
    StainModel m;
    m.hematoxylin = require_array<std::array<double, 3>>(j, "hematoxylin");
    m.eosin = require_array<std::array<double, 3>>(j, "eosin");
    m.max_conc = require_array<std::array<double, 2>>(j, "max_conc");
    for (const auto* col : {&m.hematoxylin, &m.eosin}) {
      if (std::fabs(std::sqrt(dot(*col, *col)) - 1.0) > 1e-6) fail(ErrorCode::MalformedFile, "stain vectors must be unit length");
      for (double v : *col) {
        if (v < 0.0) fail(ErrorCode::MalformedFile, "stain vectors must be nonnegative");
      }
    }
    for (double v : m.max_conc) {
      if (!(v > 0.0)) fail(ErrorCode::MalformedFile, "max_conc entries must be positive");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string("macenko stain model: ") + e.what());
  }
}

}  // namespace colornorm
