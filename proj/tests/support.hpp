// Shared builders for the test suites: seeded random cubes, maps and small
// solver problems that own everything the SolverProblem references.
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "sphl/runner.hpp"

namespace sphl::test {

inline HistogramCube random_cube(std::size_t rows, std::size_t cols, std::size_t bins,
                                 std::size_t k, std::uint64_t seed, double mean = 1.0) {
  std::mt19937_64 gen(seed);
  std::poisson_distribution<std::uint32_t> pois(mean);
  HistogramCube c(rows, cols, bins, k);
  for (auto& v : c.data()) v = pois(gen);
  return c;
}

inline Map random_map(std::size_t rows, std::size_t cols, std::size_t ch, double lo,
                      double hi, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(lo, hi);
  Map m(rows, cols, ch);
  for (auto& v : m.data()) v = u(gen);
  return m;
}

/// Single-wavelength SIR plus its fit, for ml tests.
inline ImpulseResponse gaussian_sir(double sigma, std::size_t k = 1) {
  return fit_sir(std::vector<std::vector<double>>(k, gaussian_sir_samples(sigma)));
}

/// A random solver instance. Weight fields are random positive rows
/// normalized to one, estimates have random counts, and the state is random
/// and strictly positive.
struct RandomProblem {
  ScaleConfig scales;
  MultiScaleEstimates ml;
  std::unique_ptr<WeightField> w, v;
  std::unique_ptr<SolverProblem> pb;
  SolverState state;
  SolverConfig cfg;

  RandomProblem(std::size_t rows, std::size_t cols, std::size_t levels, std::size_t k,
                std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    scales = default_scale_config(levels);
    for (std::size_t l = 0; l < levels; ++l) {
      ScaleEstimate s;
      s.window = scales.windows[l];
      s.area = scales.area(l);
      s.d_ml = random_map(rows, cols, 1, 0.0, 100.0, gen);
      s.s_bar = Map(rows, cols, k);
      for (auto& x : s.s_bar.data()) {
        // A few exact zeros exercise the empty-pixel branches.
        x = u01(gen) < 0.15 ? 0.0 : std::floor(u01(gen) * 40.0 * s.area) + 1.0;
      }
      s.r_ml = s.s_bar;
      for (auto& x : s.r_ml.data()) x /= s.area;
      s.sigma_bar_sq = Map(rows, cols, 1);
      s.empty = Mask(rows, cols);
      for (std::size_t n = 0; n < rows * cols; ++n) {
        double tot = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) tot += s.s_bar(n, kk);
        s.sigma_bar_sq(n) = tot > 0.0 ? 9.0 / tot : std::numeric_limits<double>::infinity();
        s.empty(n) = tot > 0.0 ? 0 : 1;
      }
      ml.scales.push_back(std::move(s));
    }
    w = std::make_unique<WeightField>(rows, cols, levels, 3);
    v = std::make_unique<WeightField>(rows, cols, levels, 3, k);
    fill_rows(*w, 1, gen);
    fill_rows(*v, k, gen);
    pb = std::make_unique<SolverProblem>(ml, *w, *v);

    state.rows = rows;
    state.cols = cols;
    state.levels = levels;
    state.wavelengths = k;
    const std::size_t n = rows * cols;
    auto draw = [&](std::size_t count, double lo, double hi) {
      std::uniform_real_distribution<double> d(lo, hi);
      std::vector<double> out(count);
      for (auto& x : out) x = d(gen);
      return out;
    };
    state.x = draw(n, 0.0, 100.0);
    state.d = draw(levels * n, 0.0, 100.0);
    state.eps = draw(n, 0.5, 20.0);
    state.m = draw(n * k, 0.1, 40.0);
    state.r = draw(levels * n * k, 0.1, 40.0);
    state.psi = draw(n * k, 0.5, 50.0);
  }

  static void fill_rows(WeightField& f, std::size_t k, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t kk = 0; kk < k; ++kk) {
      for (std::size_t n = 0; n < f.pixels(); ++n) {
        double s = 0.0;
        for (std::size_t l = 0; l < f.levels(); ++l) {
          for (std::size_t j = 0; j < f.taps(); ++j) {
            // Sparse rows: some exact zeros.
            const double x = u(gen) < 0.2 ? 0.0 : u(gen);
            f.at(kk, n, l, j) = x;
            s += x;
          }
        }
        if (s == 0.0) {
          f.at(kk, n, 0, f.taps() / 2) = 1.0;
          s = 1.0;
        }
        for (std::size_t l = 0; l < f.levels(); ++l)
          for (std::size_t j = 0; j < f.taps(); ++j) f.at(kk, n, l, j) /= s;
      }
    }
  }
};

/// Every byte of every output map, for determinism comparisons.
inline std::string encode_all(const Reconstruction& r) {
  return encode_map({r.depth, MapSemantic::depth, "bins"}) +
         encode_map({r.reflectivity, MapSemantic::reflectivity, "photons"}) +
         encode_map({r.depth_uncertainty, MapSemantic::uncertainty, "bins2"}) +
         encode_map({r.reflectivity_uncertainty, MapSemantic::uncertainty, "photons2"});
}

}  // namespace sphl::test
