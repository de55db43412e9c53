// Plain-text key=value run configuration. Every key has a default, unknown
// keys are rejected, and serialize() emits every key so files round-trip.
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sphl/eval.hpp"
#include "sphl/format.hpp"
#include "sphl/guidance.hpp"
#include "sphl/simulator.hpp"
#include "sphl/solver.hpp"
#include "sphl/types.hpp"

namespace sphl {

enum class Algorithm { prop, class_, xcorr };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::prop: return "prop";
    case Algorithm::class_: return "class";
    case Algorithm::xcorr: return "xcorr";
  }
  return "prop";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "prop") return Algorithm::prop;
  if (s == "class") return Algorithm::class_;
  if (s == "xcorr") return Algorithm::xcorr;
  throw InvalidConfig("unknown algorithm '" + s + "' (expected prop|class|xcorr)");
}

/// "gaussian:SIGMA" or "asymmetric:ATTACK:TRAIL".
struct SirSpec {
  enum class Kind { gaussian, asymmetric };
  Kind kind{Kind::asymmetric};
  double sigma{2.0};
  std::size_t attack{3};
  std::size_t trail{26};

  static SirSpec parse(const std::string& text);
  [[nodiscard]] std::string to_string() const {
    if (kind == Kind::gaussian) return "gaussian:" + format_shortest(sigma);
    return "asymmetric:" + std::to_string(attack) + ":" + std::to_string(trail);
  }
  [[nodiscard]] std::vector<double> samples() const {
    return kind == Kind::gaussian ? gaussian_sir_samples(sigma)
                                  : asymmetric_sir_samples(attack, trail);
  }
  [[nodiscard]] ImpulseResponse build(std::size_t wavelengths) const {
    return fit_sir(std::vector<std::vector<double>>(wavelengths, samples()));
  }

  bool operator==(const SirSpec&) const = default;
};

enum class SceneSource { two_plane, staircase, from_files };

struct SimConfig {
  SceneSource scene{SceneSource::two_plane};
  std::string scene_dir;
  std::size_t rows{64}, cols{64}, bins{300}, wavelengths{1};
  double bin_width_ps{20.0};
  double sbr{1.0};
  double ppp{10.0};
  BackgroundShape background;
  std::uint64_t seed{1};
  SirSpec sir;
  SceneOptions scene_options;

  bool operator==(const SimConfig& o) const {
    const auto& a = scene_options;
    const auto& b = o.scene_options;
    return scene == o.scene && scene_dir == o.scene_dir && rows == o.rows &&
           cols == o.cols && bins == o.bins && wavelengths == o.wavelengths &&
           bin_width_ps == o.bin_width_ps && sbr == o.sbr && ppp == o.ppp &&
           background == o.background && seed == o.seed && sir == o.sir &&
           a.depth_far == b.depth_far && a.depth_near == b.depth_near &&
           a.step == b.step && a.steps == b.steps &&
           a.reflect_far == b.reflect_far && a.reflect_near == b.reflect_near &&
           a.open_cols == b.open_cols;
  }
};

struct EvalConfig {
  std::vector<double> taus{default_taus()};
  double headline_tau{10.0};
  double group_velocity{kSpeedOfLight};

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  ScaleConfig scales;
  GuidanceConfig guidance;
  SolverConfig solver;
  SimConfig sim;
  EvalConfig eval;
  Algorithm algorithm{Algorithm::prop};
  std::size_t threads{1};
  std::string depth_guide_file;
  std::string intensity_guide_file;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

inline SirSpec SirSpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  SirSpec s;
  if (parts.size() == 2 && parts[0] == "gaussian") {
    const auto v = parse_double(parts[1]);
    if (!v || !(*v > 0.0) || !std::isfinite(*v)) {
      throw InvalidConfig("sir: bad gaussian sigma in '" + text + "'");
    }
    s.kind = Kind::gaussian;
    s.sigma = *v;
    return s;
  }
  if (parts.size() == 3 && parts[0] == "asymmetric") {
    const auto a = parse_int<std::size_t>(parts[1]);
    const auto t = parse_int<std::size_t>(parts[2]);
    if (!a || !t) throw InvalidConfig("sir: bad asymmetric widths in '" + text + "'");
    s.kind = Kind::asymmetric;
    s.attack = *a;
    s.trail = *t;
    return s;
  }
  throw InvalidConfig("sir: expected gaussian:S or asymmetric:A:T, got '" + text + "'");
}

namespace detail {

inline std::string join_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_shortest(v[i]);
  }
  return out;
}

inline std::string join_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, sep);) out.push_back(p);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// One config key: name, printer and parser.
struct ConfigKey {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline double want_double(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) {
    throw InvalidConfig(key + ": expected a finite number, got '" + v + "'");
  }
  return *d;
}

template <typename Int>
Int want_int(const std::string& key, const std::string& v) {
  const auto d = parse_int<Int>(v);
  if (!d) throw InvalidConfig(key + ": expected an integer, got '" + v + "'");
  return *d;
}

inline std::vector<double> want_double_list(const std::string& key,
                                            const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split(v, ',')) out.push_back(want_double(key, trim(p)));
  if (out.empty()) throw InvalidConfig(key + ": empty list");
  return out;
}

inline std::vector<std::size_t> want_size_list(const std::string& key,
                                               const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& p : split(v, ',')) out.push_back(want_int<std::size_t>(key, trim(p)));
  if (out.empty()) throw InvalidConfig(key + ": empty list");
  return out;
}

#define SPHL_DOUBLE_KEY(name, field)                                        \
  ConfigKey{name, [](const RunConfig& c) { return format_shortest(c.field); }, \
            [](RunConfig& c, const std::string& v) { c.field = want_double(name, v); }}
#define SPHL_SIZE_KEY(name, field)                                              \
  ConfigKey{name, [](const RunConfig& c) { return std::to_string(c.field); },   \
            [](RunConfig& c, const std::string& v) {                            \
              c.field = want_int<std::size_t>(name, v);                         \
            }}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      ConfigKey{"algorithm", [](const RunConfig& c) { return to_string(c.algorithm); },
                [](RunConfig& c, const std::string& v) { c.algorithm = parse_algorithm(v); }},
      SPHL_SIZE_KEY("threads", threads),

      ConfigKey{"scale.windows",
                [](const RunConfig& c) { return join_list(c.scales.windows); },
                [](RunConfig& c, const std::string& v) {
                  c.scales.windows = want_size_list("scale.windows", v);
                }},
      SPHL_SIZE_KEY("scale.neighborhood", scales.neighborhood),
      SPHL_SIZE_KEY("scale.guide_window", scales.guide_window),

      SPHL_DOUBLE_KEY("guidance.zeta", guidance.zeta),
      SPHL_DOUBLE_KEY("guidance.eta_floor", guidance.eta_floor),
      ConfigKey{"guidance.guide_depth",
                [](const RunConfig& c) -> std::string {
                  switch (c.guidance.guide_depth) {
                    case DepthGuideKind::gd1: return "gd1";
                    case DepthGuideKind::gd2: return "gd2";
                    case DepthGuideKind::external: return "external";
                  }
                  return "gd1";
                },
                [](RunConfig& c, const std::string& v) {
                  if (v == "gd1") c.guidance.guide_depth = DepthGuideKind::gd1;
                  else if (v == "gd2") c.guidance.guide_depth = DepthGuideKind::gd2;
                  else if (v == "external") c.guidance.guide_depth = DepthGuideKind::external;
                  else throw InvalidConfig("guidance.guide_depth: expected gd1|gd2|external, got '" + v + "'");
                }},
      ConfigKey{"guidance.guide_intensity",
                [](const RunConfig& c) -> std::string {
                  return c.guidance.guide_intensity == IntensityGuideKind::gi1 ? "gi1"
                                                                               : "external";
                },
                [](RunConfig& c, const std::string& v) {
                  if (v == "gi1") c.guidance.guide_intensity = IntensityGuideKind::gi1;
                  else if (v == "external") c.guidance.guide_intensity = IntensityGuideKind::external;
                  else throw InvalidConfig("guidance.guide_intensity: expected gi1|external, got '" + v + "'");
                }},
      SPHL_SIZE_KEY("guidance.gd1_min_agree", guidance.gd1_min_agree),
      SPHL_SIZE_KEY("guidance.gd2_k", guidance.gd2_k),
      SPHL_DOUBLE_KEY("guidance.gd2_std_mult", guidance.gd2_std_mult),
      ConfigKey{"guidance.depth_guide_file",
                [](const RunConfig& c) { return c.depth_guide_file; },
                [](RunConfig& c, const std::string& v) { c.depth_guide_file = v; }},
      ConfigKey{"guidance.intensity_guide_file",
                [](const RunConfig& c) { return c.intensity_guide_file; },
                [](RunConfig& c, const std::string& v) { c.intensity_guide_file = v; }},

      SPHL_DOUBLE_KEY("solver.alpha_d", solver.alpha_d),
      SPHL_DOUBLE_KEY("solver.beta_d", solver.beta_d),
      SPHL_DOUBLE_KEY("solver.alpha_r", solver.alpha_r),
      SPHL_DOUBLE_KEY("solver.beta_r", solver.beta_r),
      SPHL_SIZE_KEY("solver.max_iters", solver.max_iters),
      SPHL_DOUBLE_KEY("solver.xi", solver.xi),
      SPHL_DOUBLE_KEY("solver.eps_floor", solver.eps_floor),
      SPHL_DOUBLE_KEY("solver.psi_floor", solver.psi_floor),
      ConfigKey{"solver.shape_convention",
                [](const RunConfig& c) -> std::string {
                  return c.solver.shape_convention == ShapeConvention::as_printed
                             ? "as_printed"
                             : "conjugate";
                },
                [](RunConfig& c, const std::string& v) {
                  if (v == "as_printed") c.solver.shape_convention = ShapeConvention::as_printed;
                  else if (v == "conjugate") c.solver.shape_convention = ShapeConvention::conjugate;
                  else throw InvalidConfig("solver.shape_convention: expected as_printed|conjugate, got '" + v + "'");
                }},
      ConfigKey{"solver.penalty_power",
                [](const RunConfig& c) { return std::to_string(c.solver.penalty_power); },
                [](RunConfig& c, const std::string& v) {
                  c.solver.penalty_power = want_int<int>("solver.penalty_power", v);
                }},

      ConfigKey{"sim.scene",
                [](const RunConfig& c) -> std::string {
                  switch (c.sim.scene) {
                    case SceneSource::two_plane: return "two_plane";
                    case SceneSource::staircase: return "staircase";
                    case SceneSource::from_files: return "from_files";
                  }
                  return "two_plane";
                },
                [](RunConfig& c, const std::string& v) {
                  if (v == "two_plane") c.sim.scene = SceneSource::two_plane;
                  else if (v == "staircase") c.sim.scene = SceneSource::staircase;
                  else if (v == "from_files") c.sim.scene = SceneSource::from_files;
                  else throw InvalidConfig("sim.scene: expected two_plane|staircase|from_files, got '" + v + "'");
                }},
      ConfigKey{"sim.scene_dir", [](const RunConfig& c) { return c.sim.scene_dir; },
                [](RunConfig& c, const std::string& v) { c.sim.scene_dir = v; }},
      SPHL_SIZE_KEY("sim.rows", sim.rows),
      SPHL_SIZE_KEY("sim.cols", sim.cols),
      SPHL_SIZE_KEY("sim.bins", sim.bins),
      SPHL_SIZE_KEY("sim.wavelengths", sim.wavelengths),
      SPHL_DOUBLE_KEY("sim.bin_width_ps", sim.bin_width_ps),
      SPHL_DOUBLE_KEY("sim.sbr", sim.sbr),
      SPHL_DOUBLE_KEY("sim.ppp", sim.ppp),
      ConfigKey{"sim.background",
                [](const RunConfig& c) { return c.sim.background.to_string(); },
                [](RunConfig& c, const std::string& v) {
                  c.sim.background = BackgroundShape::parse(v);
                }},
      ConfigKey{"sim.seed", [](const RunConfig& c) { return std::to_string(c.sim.seed); },
                [](RunConfig& c, const std::string& v) {
                  c.sim.seed = want_int<std::uint64_t>("sim.seed", v);
                }},
      ConfigKey{"sim.sir", [](const RunConfig& c) { return c.sim.sir.to_string(); },
                [](RunConfig& c, const std::string& v) { c.sim.sir = SirSpec::parse(v); }},
      SPHL_DOUBLE_KEY("sim.depth_far", sim.scene_options.depth_far),
      SPHL_DOUBLE_KEY("sim.depth_near", sim.scene_options.depth_near),
      SPHL_DOUBLE_KEY("sim.step", sim.scene_options.step),
      SPHL_SIZE_KEY("sim.steps", sim.scene_options.steps),
      SPHL_DOUBLE_KEY("sim.reflect_far", sim.scene_options.reflect_far),
      SPHL_DOUBLE_KEY("sim.reflect_near", sim.scene_options.reflect_near),
      SPHL_SIZE_KEY("sim.open_cols", sim.scene_options.open_cols),

      ConfigKey{"eval.taus", [](const RunConfig& c) { return join_list(c.eval.taus); },
                [](RunConfig& c, const std::string& v) {
                  c.eval.taus = want_double_list("eval.taus", v);
                }},
      SPHL_DOUBLE_KEY("eval.headline_tau", eval.headline_tau),
      SPHL_DOUBLE_KEY("eval.group_velocity", eval.group_velocity),
  };
  return keys;
}

#undef SPHL_DOUBLE_KEY
#undef SPHL_SIZE_KEY

}  // namespace detail

inline void RunConfig::validate() const {
  scales.validate();
  guidance.validate();
  solver.validate();
  if (threads == 0) throw InvalidConfig("threads must be >= 1");
  if (sim.rows == 0 || sim.cols == 0 || sim.bins == 0 || sim.wavelengths == 0) {
    throw InvalidConfig("sim dimensions must be positive");
  }
  if (!(sim.bin_width_ps > 0.0)) throw InvalidConfig("sim.bin_width_ps must be positive");
  if (!(sim.sbr > 0.0) || !(sim.ppp > 0.0)) {
    throw InvalidConfig("sim.sbr and sim.ppp must be positive");
  }
  if (sim.scene_options.steps == 0) throw InvalidConfig("sim.steps must be positive");
  for (double t : eval.taus) {
    if (!(t >= 0.0)) throw InvalidConfig("eval.taus must be non-negative");
  }
  if (!(eval.headline_tau >= 0.0)) throw InvalidConfig("eval.headline_tau must be >= 0");
  if (!(eval.group_velocity > 0.0)) throw InvalidConfig("eval.group_velocity must be positive");
}

/// Parses key=value text over the defaults. Blank lines and '#' comments are
/// ignored; unknown or repeated keys are errors.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const detail::ConfigKey*> index;
  for (const auto& k : detail::config_keys()) index[k.name] = &k;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) {
      throw InvalidConfig("config line " + std::to_string(lineno) + ": unknown key '" +
                          key + "'");
    }
    if (seen.count(key)) {
      throw InvalidConfig("config line " + std::to_string(lineno) + ": duplicate key '" +
                          key + "'");
    }
    seen[key] = lineno;
    it->second->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : detail::config_keys()) {
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace sphl
