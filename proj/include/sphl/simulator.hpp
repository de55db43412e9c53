// Poisson histogram simulator: procedural scenes, SBR/PPP calibration and
// counter-based sampling that is independent of the thread count.
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "sphl/core.hpp"
#include "sphl/format.hpp"
#include "sphl/parallel.hpp"
#include "sphl/rng.hpp"
#include "sphl/types.hpp"

namespace sphl {

struct BackgroundShape {
  enum class Kind { uniform, gamma };
  Kind kind{Kind::uniform};
  double alpha{2.0};  // shape
  double beta{30.0};  // scale, bins

  static BackgroundShape uniform() { return {}; }
  static BackgroundShape gamma(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
      throw InvalidConfig("gamma background needs alpha > 0 and beta > 0");
    }
    return {Kind::gamma, alpha, beta};
  }

  /// "uniform" or "gamma:A:B".
  static BackgroundShape parse(const std::string& text) {
    if (text == "uniform") return uniform();
    if (text.rfind("gamma:", 0) == 0) {
      const auto rest = text.substr(6);
      const auto colon = rest.find(':');
      if (colon == std::string::npos) {
        throw InvalidConfig("background: expected gamma:A:B, got '" + text + "'");
      }
      try {
        std::size_t p1 = 0, p2 = 0;
        const double a = std::stod(rest.substr(0, colon), &p1);
        const double b = std::stod(rest.substr(colon + 1), &p2);
        if (p1 != colon || p2 != rest.size() - colon - 1) throw std::invalid_argument("");
        return gamma(a, b);
      } catch (const std::invalid_argument&) {
        throw InvalidConfig("background: bad gamma parameters in '" + text + "'");
      } catch (const std::out_of_range&) {
        throw InvalidConfig("background: gamma parameters out of range");
      }
    }
    throw InvalidConfig("background: unknown shape '" + text + "'");
  }

  [[nodiscard]] std::string to_string() const;

  bool operator==(const BackgroundShape&) const = default;
};

inline std::string BackgroundShape::to_string() const {
  if (kind == Kind::uniform) return "uniform";
  return "gamma:" + format_shortest(alpha) + ":" + format_shortest(beta);
}

// ----------------------------------------------------------------------------
// Scenes
// ----------------------------------------------------------------------------
enum class SceneKind { two_plane, staircase };

struct SceneOptions {
  double depth_far{200.0};   // two_plane background plane / staircase start
  double depth_near{100.0};  // two_plane foreground rectangle
  double step{10.0};         // staircase step
  std::size_t steps{8};      // staircase step count across the columns
  double reflect_far{0.5};
  double reflect_near{1.0};
  std::size_t open_cols{0};  // target-free columns on the right edge
};

/// Per-wavelength reflectivity multiplier so channels differ.
inline double wavelength_tint(std::size_t k) {
  return 1.0 - 0.2 * static_cast<double>(k % 4);
}

inline SceneGroundTruth make_scene(SceneKind kind, std::size_t rows,
                                   std::size_t cols, std::size_t bins,
                                   std::size_t wavelengths,
                                   const SceneOptions& opt = {}) {
  if (rows == 0 || cols == 0 || bins == 0 || wavelengths == 0) {
    throw InvalidScene("scene dimensions must be positive");
  }
  if (opt.open_cols >= cols) throw InvalidScene("open_cols leaves no target column");
  SceneGroundTruth s;
  s.depth = Map(rows, cols, 1, 0.0);
  s.reflectivity = Map(rows, cols, wavelengths, 0.0);
  s.mask = Mask(rows, cols, 1, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t n = r * cols + c;
      double d = 0.0, refl = 0.0;
      if (kind == SceneKind::two_plane) {
        const bool inside = r >= rows / 4 && r < rows - rows / 4 &&
                            c >= cols / 4 && c < cols - cols / 4;
        d = inside ? opt.depth_near : opt.depth_far;
        refl = inside ? opt.reflect_near : opt.reflect_far;
      } else {
        const std::size_t idx = c * opt.steps / cols;
        d = opt.depth_far + opt.step * static_cast<double>(idx);
        refl = idx % 2 == 0 ? opt.reflect_near : opt.reflect_far;
      }
      if (c + opt.open_cols >= cols) {
        s.mask(n) = 0;
        s.depth(n) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      s.depth(n) = d;
      for (std::size_t k = 0; k < wavelengths; ++k) {
        s.reflectivity(n, k) = refl * wavelength_tint(k);
      }
    }
  }
  s.validate(bins);
  return s;
}

// ----------------------------------------------------------------------------
// Level calibration
// ----------------------------------------------------------------------------

/// Signal gain and background field (identical for every histogram).
struct CalibratedLevels {
  double signal_gain{0.0};
  std::vector<double> background;  // per time bin, per histogram

  [[nodiscard]] double field(std::size_t /*k*/, std::size_t /*n*/,
                             std::size_t t) const {
    return background[t];
  }
};

/// Unit-sum temporal profile of the background over `bins`.
inline std::vector<double> background_profile(const BackgroundShape& shape,
                                              std::size_t bins) {
  std::vector<double> p(bins, 1.0);
  if (shape.kind == BackgroundShape::Kind::gamma) {
    // Log-density at bin centres, shifted by its max before exponentiating.
    std::vector<double> logd(bins);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < bins; ++t) {
      const double x = static_cast<double>(t) + 0.5;
      logd[t] = (shape.alpha - 1.0) * std::log(x) - x / shape.beta;
      mx = std::max(mx, logd[t]);
    }
    for (std::size_t t = 0; t < bins; ++t) p[t] = std::exp(logd[t] - mx);
  }
  double s = 0.0;
  for (double v : p) s += v;
  for (double& v : p) v /= s;
  return p;
}

/// Solves a * sum(r) / sum(b) = sbr and (a * sum(r) + sum(b)) / (N K) = ppp.
inline CalibratedLevels calibrate_levels(const SceneGroundTruth& scene,
                                         std::size_t bins, double sbr,
                                         double ppp,
                                         const BackgroundShape& shape) {
  if (!(sbr > 0.0) || !(ppp > 0.0)) {
    throw InvalidConfig("sbr and ppp must be positive");
  }
  double refl_total = 0.0;
  for (std::size_t n = 0; n < scene.pixels(); ++n) {
    if (!scene.mask(n)) continue;
    for (std::size_t k = 0; k < scene.wavelengths(); ++k) {
      refl_total += scene.reflectivity(n, k);
    }
  }
  if (!(refl_total > 0.0)) throw InvalidScene("scene has zero total reflectivity");
  const double histograms =
      static_cast<double>(scene.pixels() * scene.wavelengths());
  const double total = histograms * ppp;
  const double bg_total = total / (1.0 + sbr);
  const double sig_total = total - bg_total;

  CalibratedLevels lv;
  lv.signal_gain = sig_total / refl_total;
  lv.background = background_profile(shape, bins);
  const double per_hist = bg_total / histograms;
  for (double& v : lv.background) v *= per_hist;
  return lv;
}

// ----------------------------------------------------------------------------
// Sampling
// ----------------------------------------------------------------------------
struct SimSpec {
  SceneGroundTruth scene;
  ImpulseResponse sir;
  std::size_t bins{300};
  double bin_width_ps{20.0};
  double sbr{1.0};
  double ppp{10.0};
  BackgroundShape background;
  std::uint64_t seed{1};
};

/// Exact Poisson means s_{n,t,k} = a r f_k(t - d) + b_t.
inline SignalCube expected_counts(const SimSpec& spec) {
  const auto& sc = spec.scene;
  sc.validate(spec.bins);
  if (spec.sir.wavelengths() != sc.wavelengths()) {
    throw InvalidSir("SIR wavelength count does not match scene");
  }
  const auto lv =
      calibrate_levels(sc, spec.bins, spec.sbr, spec.ppp, spec.background);
  SignalCube mean(sc.rows(), sc.cols(), spec.bins, sc.wavelengths(),
                  spec.bin_width_ps);
  parallel_for(sc.pixels(), [&](std::size_t n) {
    for (std::size_t k = 0; k < sc.wavelengths(); ++k) {
      auto h = mean.histogram(k, n);
      const double amp =
          sc.mask(n) ? lv.signal_gain * sc.reflectivity(n, k) : 0.0;
      for (std::size_t t = 0; t < spec.bins; ++t) {
        double s = lv.background[t];
        if (amp > 0.0) {
          s += amp * spec.sir[k].at_offset(static_cast<double>(t) - sc.depth(n));
        }
        h[t] = s;
      }
    }
  });
  return mean;
}

/// Draws y ~ Poisson(mean) entrywise; entry i uses stream i of `seed`.
inline HistogramCube sample_from_means(const SignalCube& mean,
                                       std::uint64_t seed) {
  HistogramCube cube(mean.rows(), mean.cols(), mean.bins(), mean.wavelengths(),
                     mean.bin_width_ps());
  parallel_for(mean.pixels(), [&](std::size_t n) {
    for (std::size_t k = 0; k < mean.wavelengths(); ++k) {
      for (std::size_t t = 0; t < mean.bins(); ++t) {
        const std::size_t i = mean.index(k, n, t);
        CounterRng rng(seed, i);
        cube.data()[i] = sample_poisson(mean.data()[i], rng);
      }
    }
  });
  return cube;
}

inline HistogramCube sample_histograms(const SimSpec& spec) {
  return sample_from_means(expected_counts(spec), spec.seed);
}

/// Ground truth in the units of the estimates: reflectivity scaled to
/// expected signal photons per pixel.
inline SceneGroundTruth calibrated_truth(const SimSpec& spec) {
  const auto lv = calibrate_levels(spec.scene, spec.bins, spec.sbr, spec.ppp,
                                   spec.background);
  SceneGroundTruth out = spec.scene;
  for (std::size_t n = 0; n < out.pixels(); ++n) {
    for (std::size_t k = 0; k < out.wavelengths(); ++k) {
      out.reflectivity(n, k) =
          out.mask(n) ? out.reflectivity(n, k) * lv.signal_gain : 0.0;
    }
    if (!out.mask(n)) out.depth(n) = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace sphl
