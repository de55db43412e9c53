// Outlier-robust guides and the multi-scale guidance weights.
//
// Weight convention: entry (n, l, j) of a WeightField couples the scale-l
// parameter at pixel n (depth d^(l)_n or reflectivity r^(l)_n) with the latent
// variable at neighbour j of n (x or m). Rows are normalized over (l, j).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <string>
#include <vector>

#include "sphl/background.hpp"
#include "sphl/core.hpp"
#include "sphl/parallel.hpp"
#include "sphl/types.hpp"

namespace sphl {

enum class DepthGuideKind { gd1, gd2, external };
enum class IntensityGuideKind { gi1, external };

struct GuidanceConfig {
  double zeta{9.0};        // depth tolerance, bins
  double eta_floor{0.1};
  DepthGuideKind guide_depth{DepthGuideKind::gd1};
  IntensityGuideKind guide_intensity{IntensityGuideKind::gi1};
  std::size_t gd1_min_agree{3};
  std::size_t gd2_k{8};
  double gd2_std_mult{1.0};

  void validate() const {
    if (!(zeta > 0.0)) throw InvalidConfig("zeta must be positive");
    if (!(eta_floor > 0.0)) throw InvalidConfig("eta_floor must be positive");
    if (gd2_k == 0) throw InvalidConfig("gd2_k must be positive");
    if (!(gd2_std_mult >= 0.0)) throw InvalidConfig("gd2_std_mult must be >= 0");
  }

  bool operator==(const GuidanceConfig&) const = default;
};

struct GuideResult {
  Map guide;
  bool fallback{false};  // no valid pixel: guide is the unmodified input
};

// ----------------------------------------------------------------------------
// GD1
// ----------------------------------------------------------------------------

/// Valid = non-empty with at least `min_agree` non-empty 3x3 neighbours
/// (reflect-padded, centre excluded) within 2 zeta.
inline Mask gd1_valid_mask(const Map& depth, const Mask& empty,
                           const GuidanceConfig& cfg) {
  const Stencil st(3);
  Mask valid(depth.rows(), depth.cols());
  parallel_for(depth.pixels(), [&](std::size_t n) {
    if (empty(n)) return;
    std::size_t agree = 0;
    for (std::size_t j = 0; j < st.size(); ++j) {
      if (j == st.center()) continue;
      const std::size_t m = st.neighbor(n, j, depth.rows(), depth.cols());
      if (!empty(m) && std::fabs(depth(m) - depth(n)) <= 2.0 * cfg.zeta) ++agree;
    }
    valid(n) = agree >= cfg.gd1_min_agree ? 1 : 0;
  });
  return valid;
}

/// Replaces invalid pixels by the lower median of valid pixels in the smallest
/// clipped square window (3x3, 5x5, ...) that contains one.
inline GuideResult infill_invalid(const Map& depth, const Mask& valid) {
  GuideResult out{depth, false};
  if (std::none_of(valid.data().begin(), valid.data().end(),
                   [](std::uint8_t v) { return v != 0; })) {
    out.fallback = true;
    return out;
  }
  const auto rows = static_cast<std::ptrdiff_t>(depth.rows());
  const auto cols = static_cast<std::ptrdiff_t>(depth.cols());
  const std::ptrdiff_t max_radius = std::max(rows, cols);
  parallel_for(depth.pixels(), [&](std::size_t n) {
    if (valid(n)) return;
    const auto r = static_cast<std::ptrdiff_t>(n) / cols;
    const auto c = static_cast<std::ptrdiff_t>(n) % cols;
    std::vector<double> vals;
    for (std::ptrdiff_t h = 1; h <= max_radius; ++h) {
      vals.clear();
      for (auto rr = std::max<std::ptrdiff_t>(0, r - h);
           rr <= std::min(rows - 1, r + h); ++rr) {
        for (auto cc = std::max<std::ptrdiff_t>(0, c - h);
             cc <= std::min(cols - 1, c + h); ++cc) {
          const auto m = static_cast<std::size_t>(rr * cols + cc);
          if (valid(m)) vals.push_back(depth(m));
        }
      }
      if (!vals.empty()) break;
    }
    out.guide(n) = lower_median(vals);
  });
  return out;
}

inline GuideResult guide_depth_gd1(const Map& depth, const Mask& empty,
                                   const GuidanceConfig& cfg) {
  return infill_invalid(depth, gd1_valid_mask(depth, empty, cfg));
}

// ----------------------------------------------------------------------------
// GD2: statistical outlier removal on the (col, row, depth) point cloud
// ----------------------------------------------------------------------------

/// Mean Euclidean distance from each non-empty pixel to its k nearest
/// non-empty points in (col, row, depth) space; NaN for empty pixels. The grid
/// is reflect-padded like every other neighbourhood, so border pixels see
/// mirrored neighbours at their mirrored positions.
inline Map knn_mean_distance(const Map& depth, const Mask& empty, std::size_t k) {
  const auto cols = static_cast<std::ptrdiff_t>(depth.cols());
  Map stat(depth.rows(), depth.cols(), 1, std::nan(""));
  parallel_for(depth.pixels(), [&](std::size_t n) {
    if (empty(n)) return;
    const auto r = static_cast<std::ptrdiff_t>(n) / cols;
    const auto c = static_cast<std::ptrdiff_t>(n) % cols;
    std::priority_queue<double> best;  // k smallest squared distances
    auto offer = [&](std::ptrdiff_t rr, std::ptrdiff_t cc) {
      const std::size_t m =
          reflect_index(rr, depth.rows()) * depth.cols() + reflect_index(cc, depth.cols());
      if (empty(m)) return;
      const double dr = static_cast<double>(rr - r);
      const double dc = static_cast<double>(cc - c);
      const double dd = depth(m) - depth(n);
      const double d2 = dr * dr + dc * dc + dd * dd;
      if (best.size() < k) {
        best.push(d2);
      } else if (d2 < best.top()) {
        best.pop();
        best.push(d2);
      }
    };
    // Rings grow until no unvisited point can beat the k-th best. Mirrored
    // copies exist at every radius, so the loop always ends.
    for (std::ptrdiff_t h = 1;; ++h) {
      for (std::ptrdiff_t cc = c - h; cc <= c + h; ++cc) {
        offer(r - h, cc);
        offer(r + h, cc);
      }
      for (std::ptrdiff_t rr = r - h + 1; rr <= r + h - 1; ++rr) {
        offer(rr, c - h);
        offer(rr, c + h);
      }
      // Unvisited points are at planar distance >= h + 1.
      const double bound = static_cast<double>(h + 1);
      if (best.size() == k && best.top() <= bound * bound) break;
    }
    double sum = 0.0;
    const std::size_t cnt = best.size();
    while (!best.empty()) {
      sum += std::sqrt(best.top());
      best.pop();
    }
    stat(n) = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
  });
  return stat;
}

/// Outliers: empty pixels, and pixels whose k-NN mean distance exceeds
/// mean + std_mult * std (sample std) of that statistic.
inline Mask gd2_outliers(const Map& depth, const Mask& empty,
                         const GuidanceConfig& cfg) {
  std::size_t points = 0;
  for (std::size_t n = 0; n < depth.pixels(); ++n) points += empty(n) ? 0 : 1;
  if (points < cfg.gd2_k + 1) {
    throw InvalidConfig("GD2 needs at least gd2_k+1 non-empty pixels (have " +
                        std::to_string(points) + ")");
  }
  const Map stat = knn_mean_distance(depth, empty, cfg.gd2_k);
  double sum = 0.0, sq = 0.0;
  for (std::size_t n = 0; n < depth.pixels(); ++n) {
    if (empty(n)) continue;
    sum += stat(n);
    sq += stat(n) * stat(n);
  }
  const double np = static_cast<double>(points);
  const double mean = sum / np;
  const double var = std::max(0.0, (sq - sum * sum / np) / (np - 1.0));
  const double thr = mean + cfg.gd2_std_mult * std::sqrt(var);
  Mask out(depth.rows(), depth.cols());
  for (std::size_t n = 0; n < depth.pixels(); ++n) {
    out(n) = (empty(n) || stat(n) > thr) ? 1 : 0;
  }
  return out;
}

inline GuideResult guide_depth_gd2(const Map& depth, const Mask& empty,
                                   const GuidanceConfig& cfg) {
  Mask valid = gd2_outliers(depth, empty, cfg);
  for (auto& v : valid.data()) v = v ? 0 : 1;
  return infill_invalid(depth, valid);
}

/// Per-scale guides for the configured built-in method.
inline std::vector<GuideResult> depth_guides(const MultiScaleEstimates& ms,
                                             const GuidanceConfig& cfg) {
  std::vector<GuideResult> out;
  for (const auto& s : ms.scales) {
    switch (cfg.guide_depth) {
      case DepthGuideKind::gd1:
        out.push_back(guide_depth_gd1(s.d_ml, s.empty, cfg));
        break;
      case DepthGuideKind::gd2:
        out.push_back(guide_depth_gd2(s.d_ml, s.empty, cfg));
        break;
      case DepthGuideKind::external:
        throw InvalidConfig("external depth guide must be loaded from file");
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// Weight fields
// ----------------------------------------------------------------------------
class WeightField {
 public:
  WeightField() = default;
  WeightField(std::size_t rows, std::size_t cols, std::size_t levels,
              std::size_t window, std::size_t wavelengths = 1)
      : rows_{rows}, cols_{cols}, levels_{levels}, stencil_{window},
        wavelengths_{wavelengths},
        data_(wavelengths * rows * cols * levels * window * window, 0.0) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t pixels() const noexcept { return rows_ * cols_; }
  [[nodiscard]] std::size_t levels() const noexcept { return levels_; }
  [[nodiscard]] std::size_t wavelengths() const noexcept { return wavelengths_; }
  [[nodiscard]] std::size_t taps() const noexcept { return stencil_.size(); }
  [[nodiscard]] const Stencil& stencil() const noexcept { return stencil_; }
  [[nodiscard]] std::size_t row_size() const noexcept { return levels_ * taps(); }

  double& at(std::size_t k, std::size_t n, std::size_t l, std::size_t j) noexcept {
    return data_[((k * pixels() + n) * levels_ + l) * taps() + j];
  }
  double at(std::size_t k, std::size_t n, std::size_t l, std::size_t j) const noexcept {
    return data_[((k * pixels() + n) * levels_ + l) * taps() + j];
  }
  double& at(std::size_t n, std::size_t l, std::size_t j) noexcept { return at(0, n, l, j); }
  double at(std::size_t n, std::size_t l, std::size_t j) const noexcept {
    return at(0, n, l, j);
  }

  /// Pixel index of neighbour j of n.
  [[nodiscard]] std::size_t neighbor(std::size_t n, std::size_t j) const noexcept {
    return stencil_.neighbor(n, j, rows_, cols_);
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  std::size_t rows_{0}, cols_{0}, levels_{0};
  Stencil stencil_{3};
  std::size_t wavelengths_{1};
  std::vector<double> data_;
};

namespace detail {
/// Normalizes row (k, n) to unit sum; all-zero rows take `fallback(l, j)`.
template <typename Fallback>
void normalize_row(WeightField& w, std::size_t k, std::size_t n,
                   Fallback&& fallback) {
  double sum = 0.0;
  for (std::size_t l = 0; l < w.levels(); ++l)
    for (std::size_t j = 0; j < w.taps(); ++j) sum += w.at(k, n, l, j);
  if (!(sum > 0.0)) {
    for (std::size_t l = 0; l < w.levels(); ++l)
      for (std::size_t j = 0; j < w.taps(); ++j) w.at(k, n, l, j) = fallback(l, j);
    sum = 0.0;
    for (std::size_t l = 0; l < w.levels(); ++l)
      for (std::size_t j = 0; j < w.taps(); ++j) sum += w.at(k, n, l, j);
  }
  for (std::size_t l = 0; l < w.levels(); ++l)
    for (std::size_t j = 0; j < w.taps(); ++j) w.at(k, n, l, j) /= sum;
}
}  // namespace detail

/// Depth weights: scale by scale, raw weight = prod_{l'<l}(1 - raw_{l'}) *
/// exp(-|d_ml^(l)_n - guide^(l)_{n'}| / (2 zeta q^(l))), then row-normalized.
inline WeightField depth_weights(const std::vector<Map>& d_ml,
                                 const std::vector<Map>& guides,
                                 const ScaleConfig& scales,
                                 const GuidanceConfig& cfg) {
  const std::size_t levels = scales.levels();
  if (d_ml.size() != levels || guides.size() != levels) {
    throw InvalidConfig("depth_weights: scale count mismatch");
  }
  const std::size_t rows = d_ml[0].rows(), cols = d_ml[0].cols();
  WeightField w(rows, cols, levels, scales.guide_window);
  parallel_for(rows * cols, [&](std::size_t n) {
    for (std::size_t j = 0; j < w.taps(); ++j) {
      const std::size_t nb = w.neighbor(n, j);
      double chain = 1.0;
      for (std::size_t l = 0; l < levels; ++l) {
        const double diff = std::fabs(d_ml[l](n) - guides[l](nb));
        const double raw =
            chain * std::exp(-diff / (2.0 * cfg.zeta * scales.area(l)));
        w.at(n, l, j) = raw;
        chain *= 1.0 - std::clamp(raw, 0.0, 1.0);
      }
    }
    const double uniform = 1.0 / static_cast<double>(w.row_size());
    detail::normalize_row(w, 0, n, [&](std::size_t, std::size_t) { return uniform; });
  });
  return w;
}

/// Reflectivity weights: v ~ w * exp(-|r^(l)_{n,k} - guide^(l)_{n',k}| /
/// (2 eta_{n,k} q^(l))), eta = max(eta_floor, r^(L)_{n,k}); row-normalized per
/// (n, k). Rows that underflow to zero fall back to the W row.
inline WeightField reflectivity_weights(const std::vector<Map>& r_ml,
                                        const std::vector<Map>& guides,
                                        const WeightField& w,
                                        const ScaleConfig& scales,
                                        const GuidanceConfig& cfg) {
  const std::size_t levels = scales.levels();
  if (r_ml.size() != levels || guides.size() != levels ||
      w.levels() != levels) {
    throw InvalidConfig("reflectivity_weights: scale count mismatch");
  }
  const std::size_t kk = r_ml[0].channels();
  WeightField v(w.rows(), w.cols(), levels, scales.guide_window, kk);
  parallel_for(w.pixels(), [&](std::size_t n) {
    for (std::size_t k = 0; k < kk; ++k) {
      const double eta = std::max(cfg.eta_floor, r_ml[levels - 1](n, k));
      for (std::size_t l = 0; l < levels; ++l) {
        for (std::size_t j = 0; j < w.taps(); ++j) {
          const std::size_t nb = w.neighbor(n, j);
          const double diff = std::fabs(r_ml[l](n, k) - guides[l](nb, k));
          v.at(k, n, l, j) =
              w.at(n, l, j) * std::exp(-diff / (2.0 * eta * scales.area(l)));
        }
      }
      detail::normalize_row(v, k, n, [&](std::size_t l, std::size_t j) {
        return w.at(n, l, j);
      });
    }
  });
  return v;
}

}  // namespace sphl
