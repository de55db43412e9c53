// sphl: simulate, reconstruct, evaluate and sweep single-photon Lidar cubes.
//
// Failures print one line "error: <kind>: <message>" to stderr and exit 1
// (2 for command-line usage errors).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sphl/config.hpp"
#include "sphl/io.hpp"
#include "sphl/parallel.hpp"
#include "sphl/runner.hpp"

namespace fs = std::filesystem;
using namespace sphl;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::string> algorithm;
  std::optional<double> sbr, ppp;
  std::optional<std::string> background;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> scales, threads;
  std::optional<std::string> tau;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "key=value config file");
  app->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--scales", f.scales, "number of scales L (windows 1,3,9,...)")
      ->check(CLI::PositiveNumber);
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.algorithm) cfg.algorithm = parse_algorithm(*f.algorithm);
  if (f.sbr) cfg.sim.sbr = *f.sbr;
  if (f.ppp) cfg.sim.ppp = *f.ppp;
  if (f.background) cfg.sim.background = BackgroundShape::parse(*f.background);
  if (f.seed) cfg.sim.seed = *f.seed;
  if (f.scales) {
    const auto def = default_scale_config(*f.scales);
    cfg.scales.windows = def.windows;
  }
  if (f.threads) cfg.threads = *f.threads;
  if (f.tau) cfg.eval.taus = detail::want_double_list("--tau", *f.tau);
  cfg.validate();
  set_num_threads(cfg.threads);
  return cfg;
}

template <typename T>
std::vector<T> parse_list(const std::string& flag, const std::string& text) {
  std::vector<T> out;
  for (const auto& part : detail::split(text, ',')) {
    const auto p = detail::trim(part);
    if constexpr (std::is_same_v<T, double>) {
      out.push_back(detail::want_double(flag, p));
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (p.empty()) throw InvalidConfig(flag + ": empty list entry");
      out.push_back(p);
    } else {
      out.push_back(detail::want_int<T>(flag, p));
    }
  }
  if (out.empty()) throw InvalidConfig(flag + ": empty list");
  return out;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const InvalidConfig*>(&e)) return "invalid_config";
  if (dynamic_cast<const InvalidSir*>(&e)) return "invalid_sir";
  if (dynamic_cast<const InvalidScene*>(&e)) return "invalid_scene";
  if (dynamic_cast<const LoadError*>(&e)) return "load_error";
  if (dynamic_cast<const MetricError*>(&e)) return "metric_error";
  if (dynamic_cast<const NumericalFailure*>(&e)) return "numerical_failure";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io_error";
  return "error";
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-photon Lidar reconstruction toolkit"};
  app.require_subcommand(1);

  // simulate
  CommonFlags sim_f;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "Simulate a histogram cube and its ground truth");
  add_common(sim, sim_f);
  sim->add_option("--output", sim_out, "output directory")->required();
  sim->add_option("--sbr", sim_f.sbr, "signal-to-background ratio");
  sim->add_option("--ppp", sim_f.ppp, "photons per pixel");
  sim->add_option("--background", sim_f.background, "uniform | gamma:A:B");
  sim->add_option("--seed", sim_f.seed, "random seed");

  // reconstruct
  CommonFlags rec_f;
  std::string rec_in, rec_out, rec_sir;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct depth and reflectivity maps");
  add_common(rec, rec_f);
  rec->add_option("--input", rec_in, "input .sphc cube")->required();
  rec->add_option("--output", rec_out, "output directory")->required();
  rec->add_option("--algorithm", rec_f.algorithm, "prop | class | xcorr");
  rec->add_option("--sir", rec_sir, "SIR file (default: sir.txt next to the cube)");

  // evaluate
  CommonFlags ev_f;
  std::string ev_in, ev_out, ev_truth;
  auto* ev = app.add_subcommand("evaluate", "Score a reconstruction against ground truth");
  add_common(ev, ev_f);
  ev->add_option("--input", ev_in, "reconstruction directory")->required();
  ev->add_option("--truth", ev_truth, "ground-truth scene directory")->required();
  ev->add_option("--output", ev_out, "output directory for metrics.csv")->required();
  ev->add_option("--algorithm", ev_f.algorithm, "algorithm label for the rows");
  ev->add_option("--tau", ev_f.tau, "comma-separated detection distances (bins)");

  // sweep
  CommonFlags sw_f;
  std::string sw_out, sw_alg = "prop,xcorr,class", sw_sbr = "1", sw_ppp = "10",
                      sw_bg, sw_seed;
  auto* sw = app.add_subcommand("sweep", "Run an SBR x PPP grid (resumable)");
  add_common(sw, sw_f);
  sw->add_option("--output", sw_out, "output directory")->required();
  sw->add_option("--algorithm", sw_alg, "comma list of algorithms");
  sw->add_option("--sbr", sw_sbr, "comma list of SBR values");
  sw->add_option("--ppp", sw_ppp, "comma list of PPP values");
  sw->add_option("--background", sw_bg, "comma list of background shapes");
  sw->add_option("--seed", sw_seed, "comma list of seeds");
  sw->add_option("--tau", sw_f.tau, "headline detection distance (bins)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*sim) {
      const auto cfg = resolve(sim_f);
      const auto spec = build_sim_spec(cfg.sim);
      auto cube = sample_histograms(spec);
      cube.set_bin_width_ps(spec.bin_width_ps);
      fs::create_directories(sim_out);
      save_cube(cube, sim_out + "/cube.sphc");
      save_sir(spec.sir, sim_out + "/sir.txt");
      save_scene(calibrated_truth(spec), sim_out);
      write_file_atomic(sim_out + "/config.txt", serialize_config(cfg));
    } else if (*rec) {
      const auto cfg = resolve(rec_f);
      const auto cube = load_cube(rec_in);
      const std::string sir_path =
          rec_sir.empty() ? (fs::path(rec_in).parent_path() / "sir.txt").string() : rec_sir;
      const auto sir = load_sir(sir_path);
      const auto result = run_algorithm(cfg.algorithm, cube, sir, cfg);
      write_reconstruction(result, rec_out);
    } else if (*ev) {
      const auto cfg = resolve(ev_f);
      const auto result = read_reconstruction(ev_in);
      const auto truth = load_scene(ev_truth);
      const auto rep = evaluate(to_string(cfg.algorithm), result, truth,
                                cfg.sim.bin_width_ps, cfg.eval.taus, cfg.eval.group_velocity);
      fs::create_directories(ev_out);
      write_file_atomic(ev_out + "/metrics.csv",
                        csv_row(metrics_header()) + metrics_rows(rep));
    } else if (*sw) {
      auto cfg = resolve(sw_f);
      if (sw_f.tau) {
        const auto taus = parse_list<double>("--tau", *sw_f.tau);
        if (taus.size() != 1) throw InvalidConfig("sweep --tau takes a single value");
        cfg.eval.headline_tau = taus[0];
      }
      const auto algs = parse_list<std::string>("--algorithm", sw_alg);
      const auto sbrs = parse_list<double>("--sbr", sw_sbr);
      const auto ppps = parse_list<double>("--ppp", sw_ppp);
      const auto bgs = sw_bg.empty() ? std::vector<std::string>{cfg.sim.background.to_string()}
                                     : parse_list<std::string>("--background", sw_bg);
      const auto seeds = sw_seed.empty() ? std::vector<std::uint64_t>{cfg.sim.seed}
                                         : parse_list<std::uint64_t>("--seed", sw_seed);
      std::vector<SweepCell> cells;
      for (const auto& a : algs)
        for (double s : sbrs)
          for (double p : ppps)
            for (const auto& b : bgs)
              for (auto seed : seeds)
                cells.push_back({parse_algorithm(a), s, p, BackgroundShape::parse(b), seed});
      run_sweep(cells, cfg, sw_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << error_kind(e) << ": " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
