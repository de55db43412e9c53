// Smooth background estimation from the coarsest scale, and extraction of
// gated, background-free signal histograms.
#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "sphl/core.hpp"
#include "sphl/parallel.hpp"
#include "sphl/types.hpp"

namespace sphl {

/// Lower median (element (n-1)/2 of the sorted values). Reorders `v`.
inline double lower_median(std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

struct BackgroundEstimate {
  std::size_t rows{0}, cols{0}, bins{0}, wavelengths{0};
  std::vector<double> temporal_profile;  // b-bar_{t,k}, [k][t]
  std::vector<double> pixel_level;       // b-underbar_{n,k}, [k][n]
  std::vector<double> profile_mean;      // b-double-bar_k

  [[nodiscard]] std::size_t pixels() const noexcept { return rows * cols; }

  [[nodiscard]] double temporal(std::size_t k, std::size_t t) const {
    return temporal_profile[k * bins + t];
  }
  [[nodiscard]] double level(std::size_t k, std::size_t n) const {
    return pixel_level[k * pixels() + n];
  }
  /// b-hat_{n,t,k} = max(0, level + temporal - mean(temporal)).
  [[nodiscard]] double field(std::size_t k, std::size_t n, std::size_t t) const {
    return std::max(0.0, level(k, n) + temporal(k, t) - profile_mean[k]);
  }

  static BackgroundEstimate zero(std::size_t rows, std::size_t cols,
                                 std::size_t bins, std::size_t wavelengths) {
    BackgroundEstimate b{rows, cols, bins, wavelengths, {}, {}, {}};
    b.temporal_profile.assign(wavelengths * bins, 0.0);
    b.pixel_level.assign(wavelengths * rows * cols, 0.0);
    b.profile_mean.assign(wavelengths, 0.0);
    return b;
  }

  [[nodiscard]] bool is_zero() const {
    auto nz = [](double v) { return v != 0.0; };
    return std::none_of(temporal_profile.begin(), temporal_profile.end(), nz) &&
           std::none_of(pixel_level.begin(), pixel_level.end(), nz);
  }
};

/// Fraction of lowest-count pixels treated as background-only.
inline constexpr double kBackgroundPixelFraction = 0.10;

/// Indices of the lowest-total pixels at wavelength k (stable on ties).
template <typename T>
std::vector<std::size_t> background_pixels(const Cube<T>& cube, std::size_t k) {
  const std::size_t n = cube.pixels();
  std::vector<double> totals(n);
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (const T& v : cube.histogram(k, p)) s += static_cast<double>(v);
    totals[p] = s;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return totals[a] < totals[b];
  });
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(kBackgroundPixelFraction *
                                  static_cast<double>(n)));
  idx.resize(count);
  return idx;
}

/// How the background-only samples behind the temporal profile are chosen.
enum class BackgroundSelection {
  pixel_total,  // lowest-total pixels, then the median over them per bin
  per_bin,      // per bin, the lowest 10% of pixel values, then their median
};

/// Per-pixel level b-lower. `median` is the plain median of the histogram;
/// `detrended` is mean(b-bar) + median_t(y_t - b-bar_t), which equals the
/// plain median for a flat profile and stays unbiased under a skewed one.
enum class BackgroundLevel { detrended, median };

template <typename T>
BackgroundEstimate estimate_background(
    const Cube<T>& coarsest,
    BackgroundSelection selection = BackgroundSelection::pixel_total,
    BackgroundLevel level = BackgroundLevel::detrended) {
  const std::size_t kk = coarsest.wavelengths(), bins = coarsest.bins();
  const std::size_t n = coarsest.pixels();
  auto est = BackgroundEstimate::zero(coarsest.rows(), coarsest.cols(), bins, kk);
  const auto low_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(kBackgroundPixelFraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < kk; ++k) {
    if (selection == BackgroundSelection::pixel_total) {
      const auto sel = background_pixels(coarsest, k);
      parallel_for(bins, [&](std::size_t t) {
        std::vector<double> vals;
        vals.reserve(sel.size());
        for (std::size_t p : sel) vals.push_back(static_cast<double>(coarsest.at(k, p, t)));
        est.temporal_profile[k * bins + t] = lower_median(vals);
      });
    } else {
      parallel_for(bins, [&](std::size_t t) {
        std::vector<double> vals(n);
        for (std::size_t p = 0; p < n; ++p) vals[p] = static_cast<double>(coarsest.at(k, p, t));
        std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(low_count - 1),
                         vals.end());
        vals.resize(low_count);
        est.temporal_profile[k * bins + t] = lower_median(vals);
      });
    }
    double mean = 0.0;
    for (std::size_t t = 0; t < bins; ++t) mean += est.temporal(k, t);
    est.profile_mean[k] = mean / static_cast<double>(bins);
    parallel_for(n, [&](std::size_t p) {
      const auto h = coarsest.histogram(k, p);
      std::vector<double> vals(h.begin(), h.end());
      if (level == BackgroundLevel::detrended) {
        for (std::size_t t = 0; t < bins; ++t) vals[t] -= est.temporal(k, t);
        est.pixel_level[k * n + p] =
            std::max(0.0, est.profile_mean[k] + lower_median(vals));
      } else {
        est.pixel_level[k * n + p] = lower_median(vals);
      }
    });
  }
  return est;
}

/// max(y - gain * b-hat, 0) over every bin (no gating).
template <typename T>
SignalCube subtract_background(const Cube<T>& cube, const BackgroundEstimate& bg,
                               double gain, bool clamp = true) {
  SignalCube out(cube.rows(), cube.cols(), cube.bins(), cube.wavelengths(),
                 cube.bin_width_ps());
  parallel_for(cube.pixels(), [&](std::size_t n) {
    for (std::size_t k = 0; k < cube.wavelengths(); ++k) {
      const auto h = cube.histogram(k, n);
      auto o = out.histogram(k, n);
      for (std::size_t t = 0; t < cube.bins(); ++t) {
        const double r = static_cast<double>(h[t]) - gain * bg.field(k, n, t);
        o[t] = clamp ? std::max(r, 0.0) : r;
      }
    }
  });
  return out;
}

/// Gate [max(0, d - attack_k), min(T-1, d + trail_k)] around depth d.
inline std::pair<std::size_t, std::size_t> signal_gate(double depth,
                                                       const SirChannel& sir,
                                                       std::size_t bins) {
  const auto d = static_cast<std::ptrdiff_t>(std::lround(depth));
  const auto lo = std::max<std::ptrdiff_t>(
      0, d - static_cast<std::ptrdiff_t>(sir.attack_width));
  const auto hi = std::min<std::ptrdiff_t>(
      static_cast<std::ptrdiff_t>(bins) - 1,
      d + static_cast<std::ptrdiff_t>(sir.trail_width));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

/// Zeroes a background-subtracted cube outside each pixel's gate.
inline SignalCube gate_signal(const SignalCube& residual, const Map& depth,
                              const ImpulseResponse& sir) {
  SignalCube out(residual.rows(), residual.cols(), residual.bins(),
                 residual.wavelengths(), residual.bin_width_ps());
  parallel_for(residual.pixels(), [&](std::size_t n) {
    for (std::size_t k = 0; k < residual.wavelengths(); ++k) {
      const auto [lo, hi] = signal_gate(depth(n), sir[k], residual.bins());
      const auto src = residual.histogram(k, n);
      auto dst = out.histogram(k, n);
      for (std::size_t t = lo; t <= hi; ++t) dst[t] = src[t];
    }
  });
  return out;
}

/// Background rescale from the coarsest window to `window` (area ratio).
inline double background_gain(const ScaleConfig& cfg, std::size_t level) {
  return cfg.area(level) / cfg.area(cfg.levels() - 1);
}

/// Gated signal cubes for every scale of a pyramid.
template <typename T>
std::vector<SignalCube> extract_signal(const std::vector<Cube<T>>& pyramid,
                                       const BackgroundEstimate& bg,
                                       const std::vector<Map>& d_ml,
                                       const ImpulseResponse& sir,
                                       const ScaleConfig& cfg) {
  if (pyramid.size() != cfg.levels() || d_ml.size() != cfg.levels()) {
    throw InvalidConfig("extract_signal: scale count mismatch");
  }
  std::vector<SignalCube> out;
  for (std::size_t l = 0; l < pyramid.size(); ++l) {
    const auto residual =
        subtract_background(pyramid[l], bg, background_gain(cfg, l));
    out.push_back(gate_signal(residual, d_ml[l], sir));
  }
  return out;
}

}  // namespace sphl
