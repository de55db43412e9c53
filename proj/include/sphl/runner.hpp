// Config-driven entry points shared by the CLI and the end-to-end tests:
// scene construction, simulation, algorithm dispatch, metric tables, sweeps.
#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sphl/config.hpp"
#include "sphl/eval.hpp"
#include "sphl/io.hpp"
#include "sphl/pipeline.hpp"
#include "sphl/simulator.hpp"

namespace sphl {

inline SceneGroundTruth build_scene(const SimConfig& sim) {
  switch (sim.scene) {
    case SceneSource::two_plane:
      return make_scene(SceneKind::two_plane, sim.rows, sim.cols, sim.bins,
                        sim.wavelengths, sim.scene_options);
    case SceneSource::staircase:
      return make_scene(SceneKind::staircase, sim.rows, sim.cols, sim.bins,
                        sim.wavelengths, sim.scene_options);
    case SceneSource::from_files: {
      if (sim.scene_dir.empty()) throw InvalidConfig("sim.scene=from_files needs sim.scene_dir");
      auto s = load_scene(sim.scene_dir);
      s.validate(sim.bins);
      return s;
    }
  }
  throw InvalidConfig("unknown scene source");
}

inline SimSpec build_sim_spec(const SimConfig& sim) {
  SimSpec spec;
  spec.scene = build_scene(sim);
  spec.sir = sim.sir.build(spec.scene.wavelengths());
  spec.bins = sim.bins;
  spec.bin_width_ps = sim.bin_width_ps;
  spec.sbr = sim.sbr;
  spec.ppp = sim.ppp;
  spec.background = sim.background;
  spec.seed = sim.seed;
  return spec;
}

inline ReconstructOptions reconstruct_options(const RunConfig& cfg, std::size_t rows,
                                              std::size_t cols, std::size_t wavelengths) {
  ReconstructOptions opt{cfg.scales, cfg.guidance, cfg.solver, std::nullopt, std::nullopt};
  if (cfg.guidance.guide_depth == DepthGuideKind::external) {
    opt.external_depth_guides = load_external_guide(cfg.depth_guide_file, rows, cols,
                                                    cfg.scales.levels(), 1);
  }
  if (cfg.guidance.guide_intensity == IntensityGuideKind::external) {
    opt.external_intensity_guides = load_external_guide(
        cfg.intensity_guide_file, rows, cols, cfg.scales.levels(), wavelengths);
  }
  return opt;
}

inline Reconstruction run_algorithm(Algorithm alg, const HistogramCube& cube,
                                    const ImpulseResponse& sir, const RunConfig& cfg) {
  switch (alg) {
    case Algorithm::class_: return run_class(cube, sir);
    case Algorithm::xcorr: return run_xcorr(cube, sir, cfg.scales);
    case Algorithm::prop:
      return reconstruct_proposed(
          cube, sir, reconstruct_options(cfg, cube.rows(), cube.cols(), cube.wavelengths()));
  }
  throw InvalidConfig("unknown algorithm");
}

// ----------------------------------------------------------------------------
// Output writers
// ----------------------------------------------------------------------------

inline void write_reconstruction(const Reconstruction& rec, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_map(rec.depth, MapSemantic::depth, "bins", dir + "/depth.map");
  save_map(rec.reflectivity, MapSemantic::reflectivity, "photons",
           dir + "/reflectivity.map");
  save_map(rec.depth_uncertainty, MapSemantic::uncertainty, "bins2",
           dir + "/depth_uncertainty.map");
  save_map(rec.reflectivity_uncertainty, MapSemantic::uncertainty, "photons2",
           dir + "/reflectivity_uncertainty.map");
  export_point_cloud(rec.depth, rec.reflectivity, rec.depth_uncertainty,
                     detected_pixels(rec.reflectivity), dir + "/points.txt");
  std::string trace = csv_row({"iteration", "objective"});
  for (std::size_t i = 0; i < rec.objective_trace.size(); ++i) {
    trace += csv_row({std::to_string(i), format_g9(rec.objective_trace[i])});
  }
  write_file_atomic(dir + "/trace.csv", trace);
  write_file_atomic(dir + "/runtime.txt", format_g9(rec.runtime_s) + "\n");
}

/// Reads the maps written by write_reconstruction (runtime excluded).
inline Reconstruction read_reconstruction(const std::string& dir) {
  Reconstruction rec;
  rec.depth = load_map(dir + "/depth.map").map;
  rec.reflectivity = load_map(dir + "/reflectivity.map").map;
  rec.depth_uncertainty = load_map(dir + "/depth_uncertainty.map").map;
  rec.reflectivity_uncertainty = load_map(dir + "/reflectivity_uncertainty.map").map;
  const auto rt = dir + "/runtime.txt";
  if (std::filesystem::exists(rt)) {
    const auto v = parse_double(detail::trim(read_file(rt)));
    if (v) rec.runtime_s = *v;
  }
  return rec;
}

inline const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h{
      "algorithm", "wavelength", "tau",          "dae_bins",      "dae_m",
      "iae",       "pd",         "false_detections", "iae_detection", "runtime_s"};
  return h;
}

/// One row per (wavelength, tau).
inline std::string metrics_rows(const MetricReport& rep) {
  std::string out;
  const auto& det = rep.detection;
  for (std::size_t k = 0; k < rep.iae.size(); ++k) {
    for (std::size_t i = 0; i < det.taus.size(); ++i) {
      out += csv_row({rep.algorithm, std::to_string(k), format_g9(det.taus[i]),
                      format_g9(rep.dae_bins), format_g9(rep.dae_m), format_g9(rep.iae[k]),
                      format_g9(det.pd[i]), std::to_string(det.false_detections[i]),
                      format_g9(det.iae_detection[i][k]), format_g9(rep.runtime_s)});
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// Sweeps
// ----------------------------------------------------------------------------

struct SweepCell {
  Algorithm algorithm{Algorithm::prop};
  double sbr{1.0};
  double ppp{10.0};
  BackgroundShape background;
  std::uint64_t seed{1};

  [[nodiscard]] std::string key() const {
    std::string bg = background.to_string();
    for (char& c : bg) {
      if (c == ':') c = '_';
    }
    return to_string(algorithm) + "__sbr" + format_shortest(sbr) + "__ppp" +
           format_shortest(ppp) + "__" + bg + "__seed" + std::to_string(seed);
  }
};

inline const std::vector<std::string>& sweep_header() {
  static const std::vector<std::string> h{
      "algorithm", "sbr", "ppp", "background", "seed", "dae_bins", "dae_m",
      "iae",       "tau", "pd",  "false_detections", "iae_detection", "runtime_s"};
  return h;
}

/// Runs one cell and returns its CSV row (IAE values averaged over wavelengths).
inline std::string run_sweep_cell(const SweepCell& cell, const RunConfig& base) {
  RunConfig cfg = base;
  cfg.sim.sbr = cell.sbr;
  cfg.sim.ppp = cell.ppp;
  cfg.sim.background = cell.background;
  cfg.sim.seed = cell.seed;
  const auto spec = build_sim_spec(cfg.sim);
  auto cube = sample_histograms(spec);
  cube.set_bin_width_ps(spec.bin_width_ps);
  const auto truth = calibrated_truth(spec);
  const auto rec = run_algorithm(cell.algorithm, cube, spec.sir, cfg);
  const auto rep = evaluate(to_string(cell.algorithm), rec, truth, spec.bin_width_ps,
                            {cfg.eval.headline_tau}, cfg.eval.group_velocity);
  double iae_mean = 0.0, iae_det = 0.0;
  for (std::size_t k = 0; k < rep.iae.size(); ++k) {
    iae_mean += rep.iae[k];
    iae_det += rep.detection.iae_detection[0][k];
  }
  iae_mean /= static_cast<double>(rep.iae.size());
  iae_det /= static_cast<double>(rep.iae.size());
  return csv_row({to_string(cell.algorithm), format_g9(cell.sbr), format_g9(cell.ppp),
                  cell.background.to_string(), std::to_string(cell.seed),
                  format_g9(rep.dae_bins), format_g9(rep.dae_m), format_g9(iae_mean),
                  format_g9(cfg.eval.headline_tau), format_g9(rep.detection.pd[0]),
                  std::to_string(rep.detection.false_detections[0]), format_g9(iae_det),
                  format_g9(rep.runtime_s)});
}

/// Runs every missing cell into dir/cells/<key>.csv (atomic), then rebuilds
/// dir/sweep.csv in grid order. Returns the number of cells computed.
inline std::size_t run_sweep(const std::vector<SweepCell>& cells, const RunConfig& base,
                             const std::string& dir) {
  const std::string cell_dir = dir + "/cells";
  std::filesystem::create_directories(cell_dir);
  std::set<std::string> keys;
  std::size_t computed = 0;
  for (const auto& c : cells) {
    if (!keys.insert(c.key()).second) continue;
    const std::string path = cell_dir + "/" + c.key() + ".csv";
    if (std::filesystem::exists(path)) continue;
    write_file_atomic(path, run_sweep_cell(c, base));
    ++computed;
  }
  std::string table = csv_row(sweep_header());
  keys.clear();
  for (const auto& c : cells) {
    if (!keys.insert(c.key()).second) continue;
    table += read_file(cell_dir + "/" + c.key() + ".csv");
  }
  write_file_atomic(dir + "/sweep.csv", table);
  return computed;
}

}  // namespace sphl
