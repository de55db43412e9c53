// Multi-scale pyramid construction and per-scale maximum-likelihood
// estimators (reflectivity by summation, depth by log-matched filtering).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <vector>

#include "sphl/parallel.hpp"
#include "sphl/types.hpp"

namespace sphl {

/// Floor applied to the SIR inside log f_k so every shift has a finite score.
inline constexpr double kLogFloor = 1e-12;
/// Minimum Gaussian-fit width (bins) for degenerate impulse responses.
inline constexpr double kSigmaFloor = 0.5;

// ----------------------------------------------------------------------------
// Neighbourhood indexing
// ----------------------------------------------------------------------------

/// Reflect-101 index: -1 -> 1, n -> n-2. Valid while |overshoot| < n.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept {
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (m == 1) return 0;
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * (m - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

/// Square window of odd side, offsets in row-major order (centre included).
struct Stencil {
  std::size_t side{3};
  std::vector<std::ptrdiff_t> drow;
  std::vector<std::ptrdiff_t> dcol;

  explicit Stencil(std::size_t s) : side{s} {
    const auto h = static_cast<std::ptrdiff_t>(s / 2);
    for (std::ptrdiff_t dr = -h; dr <= h; ++dr) {
      for (std::ptrdiff_t dc = -h; dc <= h; ++dc) {
        drow.push_back(dr);
        dcol.push_back(dc);
      }
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return drow.size(); }
  [[nodiscard]] std::size_t center() const noexcept { return size() / 2; }

  /// Pixel index of neighbour j of `pixel`, reflect-padded.
  [[nodiscard]] std::size_t neighbor(std::size_t pixel, std::size_t j,
                                     std::size_t rows,
                                     std::size_t cols) const noexcept {
    const auto r = static_cast<std::ptrdiff_t>(pixel / cols);
    const auto c = static_cast<std::ptrdiff_t>(pixel % cols);
    return reflect_index(r + drow[j], rows) * cols +
           reflect_index(c + dcol[j], cols);
  }
};

// ----------------------------------------------------------------------------
// Pyramid
// ----------------------------------------------------------------------------

/// Sum each (t, k) slice over a `window` x `window` box centred on every
/// pixel, reflect-padded. Output grid equals the input grid.
template <typename T>
Cube<T> window_sum(const Cube<T>& cube, std::size_t window) {
  if (window % 2 == 0) throw InvalidConfig("window side must be odd");
  if (window > 2 * std::min(cube.rows(), cube.cols())) {
    throw InvalidConfig("window " + std::to_string(window) +
                        " larger than 2*min(rows,cols)");
  }
  if (window == 1) return cube;
  using Acc = std::conditional_t<std::is_integral_v<T>, std::uint64_t, double>;
  const std::size_t rows = cube.rows(), cols = cube.cols(), bins = cube.bins();
  const std::size_t kk = cube.wavelengths();
  const auto h = static_cast<std::ptrdiff_t>(window / 2);

  std::vector<Acc> horiz(cube.data().size());
  parallel_for(kk * rows, [&](std::size_t kr) {
    const std::size_t k = kr / rows, r = kr % rows;
    for (std::size_t c = 0; c < cols; ++c) {
      Acc* out = &horiz[cube.index(k, r * cols + c, 0)];
      for (std::ptrdiff_t dc = -h; dc <= h; ++dc) {
        const std::size_t cc =
            reflect_index(static_cast<std::ptrdiff_t>(c) + dc, cols);
        const auto src = cube.histogram(k, r * cols + cc);
        for (std::size_t t = 0; t < bins; ++t) out[t] += static_cast<Acc>(src[t]);
      }
    }
  });

  Cube<T> result(rows, cols, bins, kk, cube.bin_width_ps());
  parallel_for(kk * rows, [&](std::size_t kr) {
    const std::size_t k = kr / rows, r = kr % rows;
    std::vector<Acc> acc(bins);
    for (std::size_t c = 0; c < cols; ++c) {
      std::fill(acc.begin(), acc.end(), Acc{});
      for (std::ptrdiff_t dr = -h; dr <= h; ++dr) {
        const std::size_t rr =
            reflect_index(static_cast<std::ptrdiff_t>(r) + dr, rows);
        const Acc* src = &horiz[cube.index(k, rr * cols + c, 0)];
        for (std::size_t t = 0; t < bins; ++t) acc[t] += src[t];
      }
      auto dst = result.histogram(k, r * cols + c);
      for (std::size_t t = 0; t < bins; ++t) {
        if constexpr (std::is_integral_v<T>) {
          if (acc[t] > std::numeric_limits<T>::max()) {
            throw InvalidConfig("window sum overflows count type");
          }
        }
        dst[t] = static_cast<T>(acc[t]);
      }
    }
  });
  return result;
}

/// One cube per scale, all on the input pixel grid; scale 0 is the input.
template <typename T>
std::vector<Cube<T>> build_pyramid(const Cube<T>& cube, const ScaleConfig& cfg) {
  cfg.validate(cube.rows(), cube.cols());
  std::vector<Cube<T>> out;
  out.reserve(cfg.levels());
  for (std::size_t w : cfg.windows) out.push_back(window_sum(cube, w));
  return out;
}

// ----------------------------------------------------------------------------
// Impulse response
// ----------------------------------------------------------------------------

inline SirChannel fit_sir_channel(std::vector<double> samples) {
  if (samples.empty()) throw InvalidSir("empty SIR");
  double sum = 0.0;
  for (double v : samples) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidSir("SIR samples must be finite and non-negative");
    }
    sum += v;
  }
  if (!(sum > 0.0)) throw InvalidSir("all-zero SIR");
  // Already-normalized input is kept bit-for-bit so saved SIRs reload exactly.
  if (std::fabs(sum - 1.0) > 1e-12) {
    for (double& v : samples) v /= sum;
  }

  SirChannel ch;
  double mean = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    mean += static_cast<double>(j) * samples[j];
  }
  double var = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const double d = static_cast<double>(j) - mean;
    var += d * d * samples[j];
  }
  ch.sigma = std::max(kSigmaFloor, std::sqrt(var));

  ch.peak_offset = static_cast<std::size_t>(
      std::max_element(samples.begin(), samples.end()) - samples.begin());
  const double thr = 0.01 * samples[ch.peak_offset];
  std::size_t first = ch.peak_offset, last = ch.peak_offset;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (samples[j] >= thr) {
      first = std::min(first, j);
      last = std::max(last, j);
    }
  }
  ch.attack_width = ch.peak_offset - first;
  ch.trail_width = last - ch.peak_offset;
  ch.samples = std::move(samples);
  return ch;
}

/// Normalizes each wavelength's samples and fits width, peak and edges.
inline ImpulseResponse fit_sir(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw InvalidSir("SIR has no wavelengths");
  ImpulseResponse sir;
  for (const auto& s : samples) sir.channels.push_back(fit_sir_channel(s));
  return sir;
}

/// Discrete Gaussian of std `sigma` bins, truncated at +-4 sigma.
inline std::vector<double> gaussian_sir_samples(double sigma) {
  if (!(sigma > 0.0)) throw InvalidSir("gaussian SIR sigma must be positive");
  const auto half = static_cast<std::size_t>(std::ceil(4.0 * sigma));
  std::vector<double> s(2 * half + 1);
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double x = static_cast<double>(j) - static_cast<double>(half);
    s[j] = std::exp(-0.5 * x * x / (sigma * sigma));
  }
  return s;
}

/// Lidar-like pulse: Gaussian leading edge reaching 1% of peak `attack` bins
/// before it, exponential tail reaching 1% `trail` bins after it.
inline std::vector<double> asymmetric_sir_samples(std::size_t attack,
                                                  std::size_t trail) {
  const double ln100 = std::log(100.0);
  // Half-bin margins put the 1% crossing strictly between bins.
  const double a = static_cast<double>(attack) + 0.5;
  const double lead_var = a * a / (2.0 * ln100);
  const double tau = (static_cast<double>(trail) + 0.5) / ln100;
  const std::size_t peak = attack + 2;
  std::vector<double> s(peak + trail + 4);
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double x = static_cast<double>(j) - static_cast<double>(peak);
    s[j] = x <= 0.0 ? std::exp(-0.5 * x * x / lead_var) : std::exp(-x / tau);
  }
  return s;
}

// ----------------------------------------------------------------------------
// Maximum-likelihood estimators
// ----------------------------------------------------------------------------

/// s-bar_{n,k}: per-pixel, per-wavelength sum of the (signal) counts.
template <typename T>
Map ml_reflectivity(const Cube<T>& signal) {
  Map out(signal.rows(), signal.cols(), signal.wavelengths());
  parallel_for(signal.pixels(), [&](std::size_t n) {
    for (std::size_t k = 0; k < signal.wavelengths(); ++k) {
      double s = 0.0;
      for (const T& v : signal.histogram(k, n)) s += static_cast<double>(v);
      out(n, k) = s;
    }
  });
  return out;
}

struct DepthEstimate {
  Map depth;   // bins, peak-aligned
  Mask empty;  // 1 where the pixel had no counts
};

namespace detail {
inline std::vector<std::vector<double>> log_ratio_tables(
    const ImpulseResponse& sir) {
  const double lf = std::log(kLogFloor);
  std::vector<std::vector<double>> tables;
  for (const auto& ch : sir.channels) {
    std::vector<double> t(ch.samples.size());
    for (std::size_t j = 0; j < t.size(); ++j) {
      t[j] = std::log(std::max(ch.samples[j], kLogFloor)) - lf;
    }
    tables.push_back(std::move(t));
  }
  return tables;
}
}  // namespace detail

/// Log-matched filter over integer shifts d in [0, T-1]. Depth d places the
/// SIR peak at bin d. Ties go to the lowest shift. Signed (background-
/// subtracted) input is allowed; pixels without a positive entry are empty
/// and get depth 0.
template <typename T>
DepthEstimate ml_depth(const Cube<T>& signal, const ImpulseResponse& sir) {
  if (sir.wavelengths() != signal.wavelengths()) {
    throw InvalidSir("SIR wavelength count does not match cube");
  }
  const std::size_t bins = signal.bins();
  const auto tables = detail::log_ratio_tables(sir);
  DepthEstimate est{Map(signal.rows(), signal.cols()),
                    Mask(signal.rows(), signal.cols())};
  parallel_for(signal.pixels(), [&](std::size_t n) {
    // Constant log-floor mass is shift-independent and dropped.
    std::vector<double> score(bins, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < signal.wavelengths(); ++k) {
      const auto h = signal.histogram(k, n);
      const auto& lr = tables[k];
      const auto peak = static_cast<std::ptrdiff_t>(sir[k].peak_offset);
      for (std::size_t t = 0; t < bins; ++t) {
        const double y = static_cast<double>(h[t]);
        if (y == 0.0) continue;
        total += std::max(y, 0.0);
        // d = t + peak - j for SIR index j
        for (std::size_t j = 0; j < lr.size(); ++j) {
          const std::ptrdiff_t d = static_cast<std::ptrdiff_t>(t) + peak -
                                   static_cast<std::ptrdiff_t>(j);
          if (d < 0 || d >= static_cast<std::ptrdiff_t>(bins)) continue;
          score[static_cast<std::size_t>(d)] += y * lr[j];
        }
      }
    }
    if (total <= 0.0) {
      est.depth(n) = 0.0;
      est.empty(n) = 1;
      return;
    }
    std::size_t best = 0;
    for (std::size_t d = 1; d < bins; ++d) {
      if (score[d] > score[best]) best = d;
    }
    est.depth(n) = static_cast<double>(best);
  });
  return est;
}

/// sigma-bar^2_n = (sum_k s-bar_{n,k} / sigma_k^2)^-1; +inf when no counts.
inline Map depth_variance(const Map& s_bar, const ImpulseResponse& sir) {
  if (s_bar.channels() != sir.wavelengths()) {
    throw InvalidSir("SIR wavelength count does not match reflectivity map");
  }
  Map out(s_bar.rows(), s_bar.cols());
  for (std::size_t n = 0; n < s_bar.pixels(); ++n) {
    double precision = 0.0;
    for (std::size_t k = 0; k < s_bar.channels(); ++k) {
      precision += s_bar(n, k) / (sir[k].sigma * sir[k].sigma);
    }
    out(n) = precision > 0.0 ? 1.0 / precision
                             : std::numeric_limits<double>::infinity();
  }
  return out;
}

// ----------------------------------------------------------------------------
// Per-scale estimates consumed by guidance and the solver
// ----------------------------------------------------------------------------
struct ScaleEstimate {
  std::size_t window{1};
  double area{1.0};   // q^(l)
  Map d_ml;           // bins
  Mask empty;         // no gated signal at this scale
  Map s_bar;          // summed signal counts, K channels
  Map r_ml;           // s_bar / area: per-pixel reflectivity, K channels
  Map sigma_bar_sq;   // bins^2, may be +inf
};

struct MultiScaleEstimates {
  std::vector<ScaleEstimate> scales;

  [[nodiscard]] std::size_t levels() const noexcept { return scales.size(); }
  [[nodiscard]] std::size_t rows() const { return scales.at(0).d_ml.rows(); }
  [[nodiscard]] std::size_t cols() const { return scales.at(0).d_ml.cols(); }
  [[nodiscard]] std::size_t pixels() const { return scales.at(0).d_ml.pixels(); }
  [[nodiscard]] std::size_t wavelengths() const {
    return scales.at(0).s_bar.channels();
  }
};

/// Assembles one scale from its gated signal cube.
inline ScaleEstimate make_scale_estimate(const SignalCube& signal,
                                         const DepthEstimate& depth,
                                         const ImpulseResponse& sir,
                                         std::size_t window) {
  ScaleEstimate est;
  est.window = window;
  est.area = static_cast<double>(window * window);
  est.d_ml = depth.depth;
  est.s_bar = ml_reflectivity(signal);
  est.r_ml = est.s_bar;
  for (double& v : est.r_ml.data()) v /= est.area;
  est.sigma_bar_sq = depth_variance(est.s_bar, sir);
  est.empty = Mask(signal.rows(), signal.cols());
  for (std::size_t n = 0; n < signal.pixels(); ++n) {
    bool any = false;
    for (std::size_t k = 0; k < signal.wavelengths(); ++k) {
      any = any || est.s_bar(n, k) > 0.0;
    }
    est.empty(n) = any ? 0 : 1;
  }
  return est;
}

}  // namespace sphl
