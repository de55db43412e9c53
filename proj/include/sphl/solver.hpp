// Coordinate-descent MAP solver over the depth chain (x, d, eps) and the
// reflectivity chain (m, r, psi).
//
// Orientation: W(n, l, j) couples d^(l)_n with x at neighbour j of n, and eps
// lives on the x pixel. The x, C(x), m and psi updates gather those entries
// transposed through a Couplings table.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sphl/core.hpp"
#include "sphl/guidance.hpp"
#include "sphl/parallel.hpp"
#include "sphl/types.hpp"

namespace sphl {

enum class ShapeConvention { as_printed, conjugate };

struct SolverConfig {
  double alpha_d{1e-3}, beta_d{1e-3};
  double alpha_r{1e-3}, beta_r{1e-3};
  std::size_t max_iters{50};
  double xi{1e-3};
  double eps_floor{1e-6};
  double psi_floor{1e-9};
  ShapeConvention shape_convention{ShapeConvention::as_printed};
  int penalty_power{1};  // 2 divides the d-penalty by eps^2

  void validate() const {
    auto pos = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidConfig(std::string(name) + " must be positive");
      }
    };
    pos(alpha_d, "alpha_d");
    pos(beta_d, "beta_d");
    pos(alpha_r, "alpha_r");
    pos(beta_r, "beta_r");
    pos(eps_floor, "eps_floor");
    pos(psi_floor, "psi_floor");
    if (max_iters == 0) throw InvalidConfig("max_iters must be positive");
    if (!(xi > 0.0 && xi < 1.0)) throw InvalidConfig("xi must be in (0,1)");
    if (penalty_power != 1 && penalty_power != 2) {
      throw InvalidConfig("penalty_power must be 1 or 2");
    }
  }

  /// Shape count S: L + Nbar as printed, L * Nbar for the conjugate form.
  [[nodiscard]] double shape_count(std::size_t levels, std::size_t taps) const {
    const auto l = static_cast<double>(levels), nb = static_cast<double>(taps);
    return shape_convention == ShapeConvention::as_printed ? l + nb : l * nb;
  }

  bool operator==(const SolverConfig&) const = default;
};

struct SolverState {
  std::size_t rows{0}, cols{0}, levels{0}, wavelengths{0};
  std::vector<double> x;    // [n]
  std::vector<double> d;    // [l][n]
  std::vector<double> eps;  // [n]
  std::vector<double> m;    // [n][k]
  std::vector<double> r;    // [l][n][k]
  std::vector<double> psi;  // [n][k]

  [[nodiscard]] std::size_t pixels() const noexcept { return rows * cols; }
  double& dv(std::size_t l, std::size_t n) { return d[l * pixels() + n]; }
  [[nodiscard]] double dv(std::size_t l, std::size_t n) const { return d[l * pixels() + n]; }
  double& mv(std::size_t n, std::size_t k) { return m[n * wavelengths + k]; }
  [[nodiscard]] double mv(std::size_t n, std::size_t k) const { return m[n * wavelengths + k]; }
  double& rv(std::size_t l, std::size_t n, std::size_t k) {
    return r[(l * pixels() + n) * wavelengths + k];
  }
  [[nodiscard]] double rv(std::size_t l, std::size_t n, std::size_t k) const {
    return r[(l * pixels() + n) * wavelengths + k];
  }
  double& psiv(std::size_t n, std::size_t k) { return psi[n * wavelengths + k]; }
  [[nodiscard]] double psiv(std::size_t n, std::size_t k) const {
    return psi[n * wavelengths + k];
  }

  bool operator==(const SolverState&) const = default;
};

struct SolverOutput {
  Map depth;
  Map reflectivity;
  Map depth_uncertainty;
  Map reflectivity_uncertainty;
  std::size_t iterations_run{0};
  bool converged{false};
  std::vector<double> objective_trace;  // initial value, then one per sweep
  SolverState state;
};

// ----------------------------------------------------------------------------
// Transposed neighbourhood table
// ----------------------------------------------------------------------------

/// For each pixel p, every (n, j) with neighbour j of n equal to p, in
/// increasing (n, j) order. Reflected duplicates appear once per hit.
struct Couplings {
  std::vector<std::size_t> offsets;  // size N + 1
  std::vector<std::size_t> source;   // n
  std::vector<std::size_t> tap;      // j

  [[nodiscard]] std::size_t begin(std::size_t p) const { return offsets[p]; }
  [[nodiscard]] std::size_t end(std::size_t p) const { return offsets[p + 1]; }
};

inline Couplings build_couplings(std::size_t rows, std::size_t cols,
                                 const Stencil& st) {
  const std::size_t n_pix = rows * cols;
  Couplings c;
  c.offsets.assign(n_pix + 1, 0);
  for (std::size_t n = 0; n < n_pix; ++n)
    for (std::size_t j = 0; j < st.size(); ++j)
      ++c.offsets[st.neighbor(n, j, rows, cols) + 1];
  for (std::size_t p = 0; p < n_pix; ++p) c.offsets[p + 1] += c.offsets[p];
  c.source.resize(c.offsets.back());
  c.tap.resize(c.offsets.back());
  std::vector<std::size_t> fill(c.offsets.begin(), c.offsets.end() - 1);
  for (std::size_t n = 0; n < n_pix; ++n) {
    for (std::size_t j = 0; j < st.size(); ++j) {
      const std::size_t p = st.neighbor(n, j, rows, cols);
      c.source[fill[p]] = n;
      c.tap[fill[p]] = j;
      ++fill[p];
    }
  }
  return c;
}

// ----------------------------------------------------------------------------
// Scalar kernels
// ----------------------------------------------------------------------------

/// argmin_x sum w_i |x - v_i|, the smallest minimizer. `current` is returned
/// when every weight is zero. Reorders `vw` (value, weight).
inline double weighted_median(std::vector<std::pair<double, double>>& vw,
                              double current) {
  double total = 0.0;
  for (const auto& [v, w] : vw) total += w;
  if (!(total > 0.0)) return current;
  std::sort(vw.begin(), vw.end());
  const double half = 0.5 * total;
  double cum = 0.0;
  for (const auto& [v, w] : vw) {
    cum += w;
    if (w > 0.0 && cum >= half) return v;
  }
  return vw.back().first;
}

/// argmin_d (d - d0)^2 / (2 s2) + sum w_i |d - b_i|. Infinite s2 drops the
/// quadratic (weighted median of b, `current` if all weights are zero).
inline double generalized_soft_threshold(
    double d0, double s2, std::vector<std::pair<double, double>>& bw,
    double current) {
  if (std::isinf(s2)) return weighted_median(bw, current);
  std::sort(bw.begin(), bw.end());
  // Merge equal breakpoints, drop zero weights.
  std::vector<std::pair<double, double>> pts;
  for (const auto& [b, w] : bw) {
    if (!(w > 0.0)) continue;
    if (!pts.empty() && pts.back().first == b) {
      pts.back().second += w;
    } else {
      pts.emplace_back(b, w);
    }
  }
  if (pts.empty()) return d0;
  double total = 0.0;
  for (const auto& p : pts) total += p.second;
  const double inf = std::numeric_limits<double>::infinity();
  double left = 0.0;
  for (std::size_t i = 0; i <= pts.size(); ++i) {
    const double lo = i == 0 ? -inf : pts[i - 1].first;
    const double hi = i == pts.size() ? inf : pts[i].first;
    const double stat = d0 - s2 * (2.0 * left - total);
    if (stat > lo && stat < hi) return stat;
    if (i == pts.size()) break;
    const auto [b, w] = pts[i];
    const double g = (b - d0) / s2 + 2.0 * left - total;
    if (g <= 0.0 && g + 2.0 * w >= 0.0) return b;
    left += w;
  }
  // Rounding left the scan without a bracket: pick the best candidate.
  auto cost = [&](double d) {
    double c = (d - d0) * (d - d0) / (2.0 * s2);
    for (const auto& [b, w] : pts) c += w * std::fabs(d - b);
    return c;
  };
  double best = d0, best_cost = cost(d0);
  for (const auto& p : pts) {
    const double c = cost(p.first);
    if (c < best_cost) {
      best = p.first;
      best_cost = c;
    }
  }
  return best;
}

/// argmin_{r>=0} q r - s log r + (r - mu)^2 / (2 psi_r).
inline double poisson_gaussian_root(double mu, double psi_r, double q, double s) {
  const double a = mu - q * psi_r;
  const double disc = a * a + 4.0 * psi_r * s;
  if (a >= 0.0) return 0.5 * (a + std::sqrt(disc));
  // Cancellation-free form of the same root for a < 0.
  return s > 0.0 ? 2.0 * psi_r * s / (std::sqrt(disc) - a) : 0.0;
}

// ----------------------------------------------------------------------------
// Problem bundle
// ----------------------------------------------------------------------------
struct SolverProblem {
  const MultiScaleEstimates& ml;
  const WeightField& w;
  const WeightField& v;
  Couplings couplings;

  SolverProblem(const MultiScaleEstimates& ml_, const WeightField& w_,
                const WeightField& v_)
      : ml{ml_}, w{w_}, v{v_},
        couplings{build_couplings(w_.rows(), w_.cols(), w_.stencil())} {
    if (w.levels() != ml.levels() || v.levels() != ml.levels() ||
        w.rows() != ml.rows() || w.cols() != ml.cols() ||
        v.rows() != ml.rows() || v.cols() != ml.cols() ||
        v.wavelengths() != ml.wavelengths() || v.taps() != w.taps()) {
      throw InvalidConfig("solver: weight fields do not match the estimates");
    }
  }

  [[nodiscard]] std::size_t levels() const { return ml.levels(); }
  [[nodiscard]] std::size_t pixels() const { return ml.pixels(); }
  [[nodiscard]] std::size_t wavelengths() const { return ml.wavelengths(); }
};

namespace detail {
inline double penalty_scale(double eps, int power) {
  return power == 2 ? eps * eps : eps;
}
}  // namespace detail

// ----------------------------------------------------------------------------
// Block updates (each returns the new field; inputs are not modified)
// ----------------------------------------------------------------------------

/// Weighted median of the incoming d values with the transposed W weights.
inline std::vector<double> update_x(const SolverState& s, const SolverProblem& pb) {
  std::vector<double> out(s.x.size());
  const auto& cp = pb.couplings;
  parallel_for(s.pixels(), [&](std::size_t p) {
    std::vector<std::pair<double, double>> vw;
    vw.reserve((cp.end(p) - cp.begin(p)) * s.levels);
    for (std::size_t e = cp.begin(p); e < cp.end(p); ++e) {
      const std::size_t n = cp.source[e], j = cp.tap[e];
      for (std::size_t l = 0; l < s.levels; ++l) {
        vw.emplace_back(s.dv(l, n), pb.w.at(n, l, j));
      }
    }
    out[p] = weighted_median(vw, s.x[p]);
  });
  return out;
}

inline std::vector<double> update_d(const SolverState& s, const SolverProblem& pb,
                                    const SolverConfig& cfg) {
  std::vector<double> out(s.d.size());
  const std::size_t taps = pb.w.taps();
  parallel_for(s.pixels(), [&](std::size_t n) {
    std::vector<std::pair<double, double>> bw(taps);
    for (std::size_t l = 0; l < s.levels; ++l) {
      const auto& sc = pb.ml.scales[l];
      for (std::size_t j = 0; j < taps; ++j) {
        const std::size_t nb = pb.w.neighbor(n, j);
        bw[j] = {s.x[nb], pb.w.at(n, l, j) /
                              detail::penalty_scale(s.eps[nb], cfg.penalty_power)};
      }
      out[l * s.pixels() + n] = generalized_soft_threshold(
          sc.d_ml(n), sc.sigma_bar_sq(n), bw, s.dv(l, n));
    }
  });
  return out;
}

/// C(x_p) = sum over incoming (n, l, j) of W |x_p - d^(l)_n|.
inline std::vector<double> depth_cost(const SolverState& s, const SolverProblem& pb) {
  std::vector<double> out(s.pixels());
  const auto& cp = pb.couplings;
  parallel_for(s.pixels(), [&](std::size_t p) {
    double c = 0.0;
    for (std::size_t e = cp.begin(p); e < cp.end(p); ++e) {
      const std::size_t n = cp.source[e], j = cp.tap[e];
      for (std::size_t l = 0; l < s.levels; ++l) {
        c += pb.w.at(n, l, j) * std::fabs(s.x[p] - s.dv(l, n));
      }
    }
    out[p] = c;
  });
  return out;
}

inline std::vector<double> update_epsilon(const SolverState& s,
                                          const SolverProblem& pb,
                                          const SolverConfig& cfg) {
  auto c = depth_cost(s, pb);
  const double shape = cfg.shape_count(s.levels, pb.w.taps());
  for (double& v : c) {
    v = std::max(cfg.eps_floor, (v + cfg.beta_d) / (shape + cfg.alpha_d + 1.0));
  }
  return c;
}

/// Weighted mean of the incoming r values; zero weight mass keeps m.
inline std::vector<double> update_m(const SolverState& s, const SolverProblem& pb) {
  std::vector<double> out(s.m.size());
  const auto& cp = pb.couplings;
  parallel_for(s.pixels(), [&](std::size_t p) {
    for (std::size_t k = 0; k < s.wavelengths; ++k) {
      double num = 0.0, den = 0.0;
      for (std::size_t e = cp.begin(p); e < cp.end(p); ++e) {
        const std::size_t n = cp.source[e], j = cp.tap[e];
        for (std::size_t l = 0; l < s.levels; ++l) {
          const double v = pb.v.at(k, n, l, j);
          num += v * s.rv(l, n, k);
          den += v;
        }
      }
      out[p * s.wavelengths + k] = den > 0.0 ? num / den : s.mv(p, k);
    }
  });
  return out;
}

inline std::vector<double> update_r(const SolverState& s, const SolverProblem& pb) {
  std::vector<double> out(s.r.size());
  const std::size_t taps = pb.v.taps();
  parallel_for(s.pixels(), [&](std::size_t n) {
    for (std::size_t l = 0; l < s.levels; ++l) {
      const auto& sc = pb.ml.scales[l];
      for (std::size_t k = 0; k < s.wavelengths; ++k) {
        double prec = 0.0, wm = 0.0;
        for (std::size_t j = 0; j < taps; ++j) {
          const std::size_t nb = pb.v.neighbor(n, j);
          const double a = pb.v.at(k, n, l, j) / s.psiv(nb, k);
          prec += a;
          wm += a * s.mv(nb, k);
        }
        double r = s.rv(l, n, k);
        if (prec > 0.0) {
          const double psi_r = 1.0 / prec;
          r = poisson_gaussian_root(psi_r * wm, psi_r, sc.area, sc.s_bar(n, k));
        }
        out[(l * s.pixels() + n) * s.wavelengths + k] = r;
      }
    }
  });
  return out;
}

inline std::vector<double> update_psi(const SolverState& s, const SolverProblem& pb,
                                      const SolverConfig& cfg) {
  std::vector<double> out(s.psi.size());
  const auto& cp = pb.couplings;
  const double shape = cfg.shape_count(s.levels, pb.v.taps());
  parallel_for(s.pixels(), [&](std::size_t p) {
    for (std::size_t k = 0; k < s.wavelengths; ++k) {
      double kk = 0.0;
      for (std::size_t e = cp.begin(p); e < cp.end(p); ++e) {
        const std::size_t n = cp.source[e], j = cp.tap[e];
        for (std::size_t l = 0; l < s.levels; ++l) {
          const double diff = s.mv(p, k) - s.rv(l, n, k);
          kk += pb.v.at(k, n, l, j) * diff * diff;
        }
      }
      kk *= 0.5;
      out[p * s.wavelengths + k] = std::max(
          cfg.psi_floor, (kk + cfg.beta_r) / (0.5 * shape + cfg.alpha_r + 1.0));
    }
  });
  return out;
}

// ----------------------------------------------------------------------------
// Objective
// ----------------------------------------------------------------------------

struct ObjectiveTerms {
  double depth_likelihood{0.0};
  double intensity_likelihood{0.0};
  double depth_prior{0.0};
  double intensity_prior{0.0};
  double hyperprior{0.0};

  [[nodiscard]] double total() const {
    return depth_likelihood + intensity_likelihood + depth_prior +
           intensity_prior + hyperprior;
  }
};

/// Negative log posterior up to constants. Variance normalizers always count
/// L * Nbar terms per pixel, whatever the shape convention.
inline ObjectiveTerms objective_terms(const SolverState& s, const SolverProblem& pb,
                                      const SolverConfig& cfg) {
  const std::size_t n_pix = s.pixels(), kk = s.wavelengths;
  const std::size_t taps = pb.w.taps();
  const double count = static_cast<double>(s.levels * taps);
  // Per-pixel partial sums, reduced serially for thread-count independence.
  std::vector<ObjectiveTerms> part(n_pix);
  parallel_for(n_pix, [&](std::size_t n) {
    ObjectiveTerms t;
    for (std::size_t l = 0; l < s.levels; ++l) {
      const auto& sc = pb.ml.scales[l];
      const double s2 = sc.sigma_bar_sq(n);
      if (std::isfinite(s2)) {
        const double e = s.dv(l, n) - sc.d_ml(n);
        t.depth_likelihood += e * e / (2.0 * s2);
      }
      for (std::size_t k = 0; k < kk; ++k) {
        const double r = s.rv(l, n, k), sb = sc.s_bar(n, k);
        t.intensity_likelihood += sc.area * r - (sb > 0.0 ? sb * std::log(r) : 0.0);
      }
      for (std::size_t j = 0; j < taps; ++j) {
        const std::size_t nb = pb.w.neighbor(n, j);
        t.depth_prior += pb.w.at(n, l, j) * std::fabs(s.x[nb] - s.dv(l, n)) /
                         detail::penalty_scale(s.eps[nb], cfg.penalty_power);
        for (std::size_t k = 0; k < kk; ++k) {
          const double diff = s.mv(nb, k) - s.rv(l, n, k);
          t.intensity_prior +=
              pb.v.at(k, n, l, j) * diff * diff / (2.0 * s.psiv(nb, k));
        }
      }
    }
    const double le = std::log(s.eps[n]);
    t.depth_prior += count * le;
    t.hyperprior += (cfg.alpha_d + 1.0) * le + cfg.beta_d / s.eps[n];
    for (std::size_t k = 0; k < kk; ++k) {
      const double lp = std::log(s.psiv(n, k));
      t.intensity_prior += 0.5 * count * lp;
      t.hyperprior += (cfg.alpha_r + 1.0) * lp + cfg.beta_r / s.psiv(n, k);
    }
    part[n] = t;
  });
  ObjectiveTerms sum;
  for (const auto& t : part) {
    sum.depth_likelihood += t.depth_likelihood;
    sum.intensity_likelihood += t.intensity_likelihood;
    sum.depth_prior += t.depth_prior;
    sum.intensity_prior += t.intensity_prior;
    sum.hyperprior += t.hyperprior;
  }
  return sum;
}

inline double negative_log_posterior(const SolverState& s, const SolverProblem& pb,
                                     const SolverConfig& cfg) {
  return objective_terms(s, pb, cfg).total();
}

// ----------------------------------------------------------------------------
// Driver
// ----------------------------------------------------------------------------

inline void check_finite(const std::vector<double>& v, const char* field,
                         std::size_t iteration) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericalFailure("non-finite " + std::string(field) +
                             " at iteration " + std::to_string(iteration));
    }
  }
}

/// d = guides, x = guide of scale 1, r = r_ml, m = r_ml of scale L, then one
/// variance update.
inline SolverState initialize(const SolverProblem& pb,
                              const std::vector<Map>& depth_guides,
                              const SolverConfig& cfg) {
  const auto& ml = pb.ml;
  if (depth_guides.size() != ml.levels()) {
    throw InvalidConfig("solver: one depth guide per scale required");
  }
  SolverState s;
  s.rows = ml.rows();
  s.cols = ml.cols();
  s.levels = ml.levels();
  s.wavelengths = ml.wavelengths();
  const std::size_t n_pix = s.pixels(), kk = s.wavelengths;
  // Clamp negatives but let NaN through to the finiteness checks.
  auto nonneg = [](double v) { return v < 0.0 ? 0.0 : v; };
  s.d.resize(s.levels * n_pix);
  s.r.resize(s.levels * n_pix * kk);
  for (std::size_t l = 0; l < s.levels; ++l) {
    for (std::size_t n = 0; n < n_pix; ++n) {
      s.dv(l, n) = nonneg(depth_guides[l](n));
      for (std::size_t k = 0; k < kk; ++k) {
        s.rv(l, n, k) = nonneg(ml.scales[l].r_ml(n, k));
      }
    }
  }
  s.x.assign(s.d.begin(), s.d.begin() + static_cast<std::ptrdiff_t>(n_pix));
  s.m = ml.scales.back().r_ml.data();
  for (double& v : s.m) v = nonneg(v);
  s.eps.assign(n_pix, 1.0);
  s.psi.assign(n_pix * kk, 1.0);
  s.eps = update_epsilon(s, pb, cfg);
  s.psi = update_psi(s, pb, cfg);
  check_finite(s.x, "x", 0);
  check_finite(s.d, "d", 0);
  check_finite(s.r, "r", 0);
  check_finite(s.m, "m", 0);
  return s;
}

/// ||new - old||_1 <= xi (||old||_1 + xi).
inline bool relative_change_small(const std::vector<double>& old_v,
                                  const std::vector<double>& new_v, double xi) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < old_v.size(); ++i) {
    diff += std::fabs(new_v[i] - old_v[i]);
    norm += std::fabs(old_v[i]);
  }
  return diff <= xi * (norm + xi);
}

inline SolverOutput run(const SolverProblem& pb, SolverState s,
                        const SolverConfig& cfg) {
  cfg.validate();
  SolverOutput out;
  out.objective_trace.push_back(negative_log_posterior(s, pb, cfg));
  bool depth_done = false, refl_done = false;
  std::size_t it = 0;
  while (it < cfg.max_iters && !(depth_done && refl_done)) {
    ++it;
    if (!depth_done) {
      auto x = update_x(s, pb);
      check_finite(x, "x", it);
      depth_done = relative_change_small(s.x, x, cfg.xi);
      s.x = std::move(x);
      s.d = update_d(s, pb, cfg);
      check_finite(s.d, "d", it);
      s.eps = update_epsilon(s, pb, cfg);
      check_finite(s.eps, "eps", it);
    }
    if (!refl_done) {
      auto m = update_m(s, pb);
      check_finite(m, "m", it);
      refl_done = relative_change_small(s.m, m, cfg.xi);
      s.m = std::move(m);
      s.r = update_r(s, pb);
      check_finite(s.r, "r", it);
      s.psi = update_psi(s, pb, cfg);
      check_finite(s.psi, "psi", it);
    }
    out.objective_trace.push_back(negative_log_posterior(s, pb, cfg));
  }
  out.iterations_run = it;
  out.converged = depth_done && refl_done;

  const std::size_t rows = s.rows, cols = s.cols, kk = s.wavelengths;
  out.depth = Map(rows, cols, 1);
  out.depth.data() = s.x;
  out.depth_uncertainty = Map(rows, cols, 1);
  out.depth_uncertainty.data() = s.eps;
  out.reflectivity = Map(rows, cols, kk);
  out.reflectivity.data() = s.m;
  out.reflectivity_uncertainty = Map(rows, cols, kk);
  out.reflectivity_uncertainty.data() = s.psi;
  out.state = std::move(s);
  return out;
}

}  // namespace sphl
