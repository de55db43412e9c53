#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sphl/core.hpp"
#include "sphl/rng.hpp"
#include "support.hpp"

using namespace sphl;

namespace {

/// Direct nested-loop window sum with reflect-101 padding.
HistogramCube window_sum_oracle(const HistogramCube& c, std::size_t w) {
  HistogramCube out(c.rows(), c.cols(), c.bins(), c.wavelengths());
  const auto h = static_cast<std::ptrdiff_t>(w / 2);
  auto refl = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return std::ptrdiff_t{0};
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  const auto rows = static_cast<std::ptrdiff_t>(c.rows());
  const auto cols = static_cast<std::ptrdiff_t>(c.cols());
  for (std::size_t k = 0; k < c.wavelengths(); ++k)
    for (std::ptrdiff_t r = 0; r < rows; ++r)
      for (std::ptrdiff_t q = 0; q < cols; ++q)
        for (std::size_t t = 0; t < c.bins(); ++t) {
          std::uint32_t s = 0;
          for (std::ptrdiff_t dr = -h; dr <= h; ++dr)
            for (std::ptrdiff_t dc = -h; dc <= h; ++dc)
              s += c.at(k, static_cast<std::size_t>(refl(r + dr, rows) * cols +
                                                    refl(q + dc, cols)),
                        t);
          out.at(k, static_cast<std::size_t>(r * cols + q), t) = s;
        }
  return out;
}

/// Exhaustive log-correlation over every shift, floor included.
double ml_depth_oracle(std::span<const double> y, const SirChannel& ch) {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t d = 0; d < y.size(); ++d) {
    double s = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      const double f = ch.at_offset(static_cast<std::ptrdiff_t>(t) -
                                    static_cast<std::ptrdiff_t>(d));
      s += y[t] * std::log(std::max(f, kLogFloor));
    }
    if (s > best) {
      best = s;
      arg = d;
    }
  }
  return static_cast<double>(arg);
}

}  // namespace

TEST(Pyramid, OnesBecomeNineUnderThreeByThree) {
  HistogramCube c(3, 3, 1, 1, 1.0, 1);
  const auto s = window_sum(c, 3);
  for (auto v : s.data()) EXPECT_EQ(v, 9u);
}

TEST(Pyramid, FirstScaleIsIdentity) {
  const auto c = test::random_cube(6, 5, 7, 2, 3);
  const auto p = build_pyramid(c, default_scale_config(2));
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0], c);
}

TEST(Pyramid, MatchesNestedLoopOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = test::random_cube(5, 5, 4, 1, seed, 2.0);
    EXPECT_EQ(window_sum(c, 3), window_sum_oracle(c, 3));
    EXPECT_EQ(window_sum(c, 5), window_sum_oracle(c, 5));
  }
  const auto c = test::random_cube(4, 7, 3, 2, 9, 1.5);
  EXPECT_EQ(window_sum(c, 7), window_sum_oracle(c, 7));
}

TEST(Pyramid, InteriorMassIsConserved) {
  const auto c = test::random_cube(9, 9, 5, 2, 11, 3.0);
  const auto s = window_sum(c, 3);
  for (std::size_t r = 1; r + 1 < 9; ++r) {
    for (std::size_t q = 1; q + 1 < 9; ++q) {
      double want = 0.0;
      for (std::size_t k = 0; k < 2; ++k)
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            for (auto v : c.histogram(k, (r + dr) * 9 + (q + dc))) want += v;
      double got = 0.0;
      for (std::size_t k = 0; k < 2; ++k)
        for (auto v : s.histogram(k, r * 9 + q)) got += v;
      EXPECT_EQ(got, want);
    }
  }
}

TEST(Pyramid, RejectsOversizedOrEvenWindows) {
  const auto c = test::random_cube(3, 3, 2, 1, 1);
  EXPECT_THROW(window_sum(c, 7), InvalidConfig);
  EXPECT_THROW(window_sum(c, 2), InvalidConfig);
  EXPECT_NO_THROW(window_sum(c, 5));
}

TEST(ReflectIndex, MirrorsWithoutRepeatingTheEdge) {
  EXPECT_EQ(reflect_index(-1, 5), 1u);
  EXPECT_EQ(reflect_index(-2, 5), 2u);
  EXPECT_EQ(reflect_index(5, 5), 3u);
  EXPECT_EQ(reflect_index(6, 5), 2u);
  EXPECT_EQ(reflect_index(3, 1), 0u);
  EXPECT_EQ(reflect_index(-3, 2), 1u);
}

TEST(Sir, SymmetricGaussianFit) {
  const auto sir = test::gaussian_sir(3.0);
  const auto& ch = sir[0];
  EXPECT_NEAR(ch.sigma, 3.0, 0.1);
  EXPECT_EQ(ch.attack_width, ch.trail_width);
  EXPECT_EQ(ch.peak_offset, 12u);
  double s = 0.0;
  for (double v : ch.samples) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Sir, ImpulseGetsFlooredWidth) {
  std::vector<double> s(21, 0.0);
  s[10] = 5.0;
  const auto ch = fit_sir(std::vector<std::vector<double>>{s})[0];
  EXPECT_EQ(ch.peak_offset, 10u);
  EXPECT_EQ(ch.sigma, kSigmaFloor);
  EXPECT_EQ(ch.attack_width, 0u);
  EXPECT_EQ(ch.trail_width, 0u);
}

TEST(Sir, AsymmetricEdgesMatchThresholdScan) {
  const auto raw = asymmetric_sir_samples(3, 26);
  const auto ch = fit_sir(std::vector<std::vector<double>>{raw})[0];
  // Threshold scan oracle: first/last sample at >= 1% of the peak.
  const std::size_t peak = static_cast<std::size_t>(
      std::max_element(raw.begin(), raw.end()) - raw.begin());
  std::size_t first = raw.size(), last = 0;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (raw[j] >= 0.01 * raw[peak]) {
      first = std::min(first, j);
      last = std::max(last, j);
    }
  }
  EXPECT_EQ(ch.peak_offset, peak);
  EXPECT_EQ(ch.attack_width, peak - first);
  EXPECT_EQ(ch.trail_width, last - peak);
  EXPECT_EQ(ch.attack_width, 3u);
  EXPECT_EQ(ch.trail_width, 26u);
  EXPECT_GT(ch.trail_width, ch.attack_width);
}

TEST(Sir, RejectsBadSamples) {
  using Samples = std::vector<std::vector<double>>;
  EXPECT_THROW(fit_sir(Samples{std::vector<double>{}}), InvalidSir);
  EXPECT_THROW(fit_sir(Samples{{0.0, 0.0}}), InvalidSir);
  EXPECT_THROW(fit_sir(Samples{{1.0, -0.1}}), InvalidSir);
  EXPECT_THROW(fit_sir(Samples{{1.0, std::nan("")}}), InvalidSir);
  EXPECT_THROW(fit_sir(Samples{}), InvalidSir);
}

TEST(MlReflectivity, SumsCounts) {
  HistogramCube c(1, 2, 4, 1);
  c.at(0, 0, 1) = 2;
  c.at(0, 0, 2) = 3;
  const auto r = ml_reflectivity(c);
  EXPECT_EQ(r(0), 5.0);
  EXPECT_EQ(r(1), 0.0);
}

TEST(MlReflectivity, MatchesLoopOracleAndIsLinear) {
  const auto c = test::random_cube(4, 3, 10, 3, 5, 2.0);
  const auto r = ml_reflectivity(c);
  auto c3 = c;
  for (auto& v : c3.data()) v *= 3;
  const auto r3 = ml_reflectivity(c3);
  for (std::size_t n = 0; n < c.pixels(); ++n) {
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0.0;
      for (std::size_t t = 0; t < 10; ++t) s += c.at(k, n, t);
      EXPECT_EQ(r(n, k), s);
      EXPECT_EQ(r3(n, k), 3.0 * s);
    }
  }
}

TEST(MlDepth, SingleCountPeaksAtItsBin) {
  HistogramCube c(1, 1, 100, 1);
  c.at(0, 0, 42) = 1;
  EXPECT_EQ(ml_depth(c, test::gaussian_sir(2.0)).depth(0), 42.0);
}

TEST(MlDepth, SymmetricPairPeaksBetween) {
  HistogramCube c(1, 1, 100, 1);
  c.at(0, 0, 40) = 1;
  c.at(0, 0, 44) = 1;
  EXPECT_EQ(ml_depth(c, test::gaussian_sir(2.0)).depth(0), 42.0);
}

TEST(MlDepth, EmptyPixelIsFlagged) {
  HistogramCube c(1, 2, 30, 1);
  c.at(0, 1, 10) = 1;
  const auto est = ml_depth(c, test::gaussian_sir(2.0));
  EXPECT_EQ(est.empty(0), 1);
  EXPECT_EQ(est.depth(0), 0.0);
  EXPECT_EQ(est.empty(1), 0);
}

TEST(MlDepth, MatchesExhaustiveShiftOracle) {
  const auto sir = fit_sir(std::vector<std::vector<double>>{asymmetric_sir_samples(3, 26)});
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> bin(0, 119), cnt(1, 3);
  for (int trial = 0; trial < 40; ++trial) {
    HistogramCube c(1, 1, 120, 1);
    const int hits = 1 + trial % 6;
    for (int h = 0; h < hits; ++h) c.at(0, 0, static_cast<std::size_t>(bin(gen))) += cnt(gen);
    std::vector<double> y(c.histogram(0, 0).begin(), c.histogram(0, 0).end());
    EXPECT_EQ(ml_depth(c, sir).depth(0), ml_depth_oracle(y, sir[0])) << "trial " << trial;
  }
}

TEST(MlDepth, SignedInputMatchesOracle) {
  const auto sir = fit_sir(std::vector<std::vector<double>>{asymmetric_sir_samples(3, 26)});
  std::mt19937_64 gen(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    SignalCube c(1, 1, 80, 1);
    for (auto& v : c.data()) v = noise(gen);
    c.at(0, 0, 30) += 6.0;
    std::vector<double> y(c.histogram(0, 0).begin(), c.histogram(0, 0).end());
    EXPECT_EQ(ml_depth(c, sir).depth(0), ml_depth_oracle(y, sir[0]));
  }
}

TEST(MlDepth, ShiftEquivariance) {
  const auto sir = fit_sir(std::vector<std::vector<double>>{asymmetric_sir_samples(3, 26)});
  HistogramCube a(1, 1, 200, 1), b(1, 1, 200, 1);
  const std::vector<std::pair<std::size_t, std::uint32_t>> pts{{60, 2}, {63, 1}, {70, 1}, {90, 1}};
  for (auto [t, v] : pts) {
    a.at(0, 0, t) = v;
    b.at(0, 0, t + 25) = v;
  }
  EXPECT_EQ(ml_depth(b, sir).depth(0), ml_depth(a, sir).depth(0) + 25.0);
}

TEST(MlDepth, TiesGoToTheLowestShift) {
  // A flat SIR makes every shift covering both counts tie.
  const auto sir = fit_sir(std::vector<std::vector<double>>{std::vector<double>(5, 1.0)});
  HistogramCube c(1, 1, 20, 1);
  c.at(0, 0, 10) = 1;
  const auto d = ml_depth(c, sir).depth(0);
  // Peak at sample 0, so shifts 6..10 all cover bin 10; the lowest wins.
  EXPECT_EQ(sir[0].peak_offset, 0u);
  EXPECT_EQ(d, 6.0);
}

TEST(DepthVariance, Substitution) {
  Map s(1, 1, 1, 4.0);
  ImpulseResponse sir;
  SirChannel ch;
  ch.sigma = 2.0;
  sir.channels.push_back(ch);
  EXPECT_DOUBLE_EQ(depth_variance(s, sir)(0), 1.0);
  Map z(1, 1, 1, 0.0);
  EXPECT_TRUE(std::isinf(depth_variance(z, sir)(0)));
}

TEST(DepthVariance, MultiWavelengthFormulaAndMonotone) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  ImpulseResponse sir;
  for (int k = 0; k < 3; ++k) {
    SirChannel ch;
    ch.sigma = u(gen);
    sir.channels.push_back(ch);
  }
  Map s(4, 4, 3);
  for (auto& v : s.data()) v = u(gen);
  const auto var = depth_variance(s, sir);
  for (std::size_t n = 0; n < 16; ++n) {
    double p = 0.0;
    for (int k = 0; k < 3; ++k) p += s(n, k) / (sir[k].sigma * sir[k].sigma);
    EXPECT_NEAR(var(n), 1.0 / p, 1e-12 / p);
    Map more = s;
    more(n, 1) += 1.0;
    EXPECT_LT(depth_variance(more, sir)(n), var(n));
  }
}

TEST(Rng, SplitmixReferenceVector) {
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  CounterRng a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  const auto va = a(), vb = b(), vc = c(), vd = d();
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  EXPECT_NE(va, vd);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, PoissonMomentsAcrossBothSamplers) {
  for (double mean : {0.3, 4.0, 9.99, 10.0, 37.5, 900.0}) {
    CounterRng rng(99, static_cast<std::uint64_t>(mean * 100));
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_poisson(mean, rng);
      s += x;
      s2 += x * x;
    }
    const double m = s / n, var = s2 / n - m * m;
    EXPECT_NEAR(m, mean, 5.0 * std::sqrt(mean / n)) << mean;
    // Var of the sample variance is about (2 mean^2 + mean) / n.
    EXPECT_NEAR(var, mean, 6.0 * std::sqrt((2 * mean * mean + mean) / n)) << mean;
  }
}

TEST(Rng, PoissonPmfAboveTheSwitch) {
  // Chi-square against the exact pmf for the rejection branch.
  const double mean = 15.0;
  CounterRng rng(5, 5);
  const int n = 200000;
  std::vector<int> hist(60, 0);
  for (int i = 0; i < n; ++i) {
    const auto x = sample_poisson(mean, rng);
    ++hist[std::min<std::uint32_t>(x, 59)];
  }
  double chi2 = 0.0;
  int dof = 0;
  for (int k = 3; k <= 32; ++k) {
    const double p = std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0));
    const double e = p * n;
    chi2 += (hist[k] - e) * (hist[k] - e) / e;
    ++dof;
  }
  // 30 cells: the 0.999 quantile of chi2(30) is 59.7.
  EXPECT_LT(chi2, 59.7) << "dof " << dof;
}

TEST(Rng, PoissonZeroMean) {
  CounterRng rng(1, 1);
  EXPECT_EQ(sample_poisson(0.0, rng), 0u);
  EXPECT_EQ(sample_poisson(-1.0, rng), 0u);
}
