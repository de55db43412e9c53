// Baseline reconstructions and the depth / intensity / detection metrics.
#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "sphl/background.hpp"
#include "sphl/core.hpp"
#include "sphl/pipeline.hpp"
#include "sphl/types.hpp"

namespace sphl {

/// Matched filter and sums on the raw scale-1 histograms.
template <typename T>
Reconstruction run_class(const Cube<T>& cube, const ImpulseResponse& sir) {
  const auto t0 = std::chrono::steady_clock::now();
  Reconstruction rec;
  rec.depth = ml_depth(cube, sir).depth;
  rec.reflectivity = ml_reflectivity(cube);
  rec.depth_uncertainty = depth_variance(rec.reflectivity, sir);
  rec.reflectivity_uncertainty = rec.reflectivity;  // Poisson variance = mean
  rec.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Background removal from the coarsest scale, then the scale-1 ML estimates
/// on the gated signal.
template <typename T>
Reconstruction run_xcorr(const Cube<T>& cube, const ImpulseResponse& sir,
                         const ScaleConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate(cube.rows(), cube.cols());
  if (sir.wavelengths() != cube.wavelengths()) {
    throw InvalidSir("SIR wavelength count does not match cube");
  }
  const auto bg = estimate_background(window_sum(cube, cfg.windows.back()));
  const double g = background_gain(cfg, 0);
  const auto depth = ml_depth(subtract_background(cube, bg, g, false), sir);
  const auto residual = subtract_background(cube, bg, g);
  const auto gated = gate_signal(residual, depth.depth, sir);
  Reconstruction rec;
  rec.depth = depth.depth;
  rec.reflectivity = ml_reflectivity(gated);
  rec.depth_uncertainty = depth_variance(rec.reflectivity, sir);
  rec.reflectivity_uncertainty = rec.reflectivity;
  rec.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ----------------------------------------------------------------------------
// Metrics
// ----------------------------------------------------------------------------

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Bins to metres for a round trip.
inline double bins_to_meters(double bins, double bin_width_ps,
                             double group_velocity = kSpeedOfLight) {
  return bins * bin_width_ps * 1e-12 * group_velocity / 2.0;
}

namespace detail {
inline void check_dims(const Map& est, const SceneGroundTruth& scene,
                       std::size_t channels) {
  if (!est.same_shape(scene.rows(), scene.cols(), channels)) {
    throw MetricError("estimate dimensions do not match the scene");
  }
}
}  // namespace detail

/// Mean |d_est - d_ref| over target pixels, in bins.
inline double dae(const Map& d_est, const SceneGroundTruth& scene) {
  detail::check_dims(d_est, scene, 1);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < scene.pixels(); ++n) {
    if (!scene.mask(n)) continue;
    sum += std::fabs(d_est(n) - scene.depth(n));
    ++count;
  }
  if (count == 0) throw MetricError("DAE undefined: scene has no target pixels");
  return sum / static_cast<double>(count);
}

/// ||r_ref - r_est||_1 / ||r_ref||_1 per wavelength, over all pixels.
inline std::vector<double> iae(const Map& r_est, const SceneGroundTruth& scene) {
  detail::check_dims(r_est, scene, scene.wavelengths());
  std::vector<double> out;
  for (std::size_t k = 0; k < scene.wavelengths(); ++k) {
    double err = 0.0, mass = 0.0;
    for (std::size_t n = 0; n < scene.pixels(); ++n) {
      err += std::fabs(scene.reflectivity(n, k) - r_est(n, k));
      mass += std::fabs(scene.reflectivity(n, k));
    }
    if (!(mass > 0.0)) {
      throw MetricError("IAE undefined: zero reference reflectivity at wavelength " +
                        std::to_string(k));
    }
    out.push_back(err / mass);
  }
  return out;
}

/// A pixel carries an estimated point iff its reflectivity summed over
/// wavelengths is positive.
inline Mask detected_pixels(const Map& r_est) {
  Mask out(r_est.rows(), r_est.cols());
  for (std::size_t n = 0; n < r_est.pixels(); ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < r_est.channels(); ++k) s += r_est(n, k);
    out(n) = s > 0.0 ? 1 : 0;
  }
  return out;
}

inline const std::vector<double>& default_taus() {
  static const std::vector<double> taus{1, 2, 5, 10, 20};
  return taus;
}

struct DetectionMetrics {
  std::vector<double> taus;
  std::vector<double> pd;                            // per tau
  std::vector<std::size_t> false_detections;         // per tau
  std::vector<std::vector<double>> iae_detection;    // [tau][k]
};

/// True detection: target pixel with a point within tau of d_ref. False
/// detections: points at non-target pixels plus target points beyond tau.
/// The detection-aware IAE charges r_ref / ||r_ref||_1 for every target pixel
/// without a true detection.
inline DetectionMetrics detection_metrics(const Map& d_est, const Map& r_est,
                                          const SceneGroundTruth& scene,
                                          const std::vector<double>& taus) {
  detail::check_dims(d_est, scene, 1);
  detail::check_dims(r_est, scene, scene.wavelengths());
  const std::size_t targets = scene.target_count();
  if (targets == 0) throw MetricError("detection metrics undefined: no target pixels");
  const Mask det = detected_pixels(r_est);
  const std::size_t kk = scene.wavelengths();
  std::vector<double> mass(kk, 0.0);
  for (std::size_t n = 0; n < scene.pixels(); ++n)
    for (std::size_t k = 0; k < kk; ++k) mass[k] += std::fabs(scene.reflectivity(n, k));

  DetectionMetrics out;
  out.taus = taus;
  for (double tau : taus) {
    std::size_t hits = 0, false_det = 0;
    std::vector<double> err(kk, 0.0);
    for (std::size_t n = 0; n < scene.pixels(); ++n) {
      if (!scene.mask(n)) {
        if (det(n)) ++false_det;  // charged r_ref = 0
        continue;
      }
      const bool hit = det(n) && std::fabs(d_est(n) - scene.depth(n)) <= tau;
      if (hit) {
        ++hits;
      } else if (det(n)) {
        ++false_det;
      }
      for (std::size_t k = 0; k < kk; ++k) {
        const double ref = scene.reflectivity(n, k);
        err[k] += hit ? std::fabs(ref - r_est(n, k)) : std::fabs(ref);
      }
    }
    out.pd.push_back(static_cast<double>(hits) / static_cast<double>(targets));
    out.false_detections.push_back(false_det);
    std::vector<double> ia(kk);
    for (std::size_t k = 0; k < kk; ++k) {
      if (!(mass[k] > 0.0)) {
        throw MetricError("IAE undefined: zero reference reflectivity");
      }
      ia[k] = err[k] / mass[k];
    }
    out.iae_detection.push_back(std::move(ia));
  }
  return out;
}

struct MetricReport {
  std::string algorithm;
  double dae_bins{0.0};
  double dae_m{0.0};
  std::vector<double> iae;  // per wavelength
  DetectionMetrics detection;
  double runtime_s{0.0};
};

inline MetricReport evaluate(const std::string& algorithm, const Reconstruction& rec,
                             const SceneGroundTruth& scene, double bin_width_ps,
                             const std::vector<double>& taus,
                             double group_velocity = kSpeedOfLight) {
  MetricReport rep;
  rep.algorithm = algorithm;
  rep.dae_bins = dae(rec.depth, scene);
  rep.dae_m = bins_to_meters(rep.dae_bins, bin_width_ps, group_velocity);
  rep.iae = iae(rec.reflectivity, scene);
  rep.detection = detection_metrics(rec.depth, rec.reflectivity, scene, taus);
  rep.runtime_s = rec.runtime_s;
  return rep;
}

}  // namespace sphl
