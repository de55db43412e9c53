#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sphl/eval.hpp"
#include "sphl/simulator.hpp"
#include "support.hpp"

using namespace sphl;

namespace {

SceneGroundTruth tiny_scene() {
  SceneGroundTruth s;
  s.depth = Map(2, 3, 1);
  s.reflectivity = Map(2, 3, 2);
  s.mask = Mask(2, 3);
  const double d[] = {10, 20, 30, 40, 50, 0};
  for (std::size_t n = 0; n < 6; ++n) {
    s.mask(n) = n < 5 ? 1 : 0;
    s.depth(n) = n < 5 ? d[n] : std::nan("");
    s.reflectivity(n, 0) = n < 5 ? 1.0 + static_cast<double>(n) : 0.0;
    s.reflectivity(n, 1) = n < 5 ? 0.5 : 0.0;
  }
  return s;
}

SceneGroundTruth random_scene(std::mt19937_64& gen, std::size_t rows, std::size_t cols,
                              std::size_t k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneGroundTruth s;
  s.depth = Map(rows, cols, 1);
  s.reflectivity = Map(rows, cols, k);
  s.mask = Mask(rows, cols);
  for (std::size_t n = 0; n < rows * cols; ++n) {
    s.mask(n) = u(gen) < 0.8 ? 1 : 0;
    s.depth(n) = s.mask(n) ? std::floor(u(gen) * 200.0) : std::nan("");
    for (std::size_t c = 0; c < k; ++c) s.reflectivity(n, c) = s.mask(n) ? u(gen) * 3 : 0.0;
  }
  s.mask(0) = 1;
  s.depth(0) = 5.0;
  s.reflectivity(0, 0) = 1.0;
  return s;
}

Map copy_depth(const SceneGroundTruth& s, double fill = 0.0) {
  Map d = s.depth;
  for (std::size_t n = 0; n < d.pixels(); ++n) {
    if (!s.mask(n)) d(n) = fill;
  }
  return d;
}

SimSpec spec_for(std::size_t size, std::size_t open_cols, double sbr, double ppp,
                 BackgroundShape bg, std::uint64_t seed) {
  SimSpec spec;
  SceneOptions opt;
  opt.open_cols = open_cols;
  spec.scene = make_scene(SceneKind::two_plane, size, size, spec.bins, 1, opt);
  spec.sir = test::gaussian_sir(3.0, 1);
  spec.sbr = sbr;
  spec.ppp = ppp;
  spec.background = bg;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST(Dae, IdentityAndOffset) {
  const auto s = tiny_scene();
  EXPECT_EQ(dae(copy_depth(s), s), 0.0);
  auto d = copy_depth(s, 1e6);  // non-target pixels do not count
  EXPECT_EQ(dae(d, s), 0.0);
  for (std::size_t n = 0; n < 5; ++n) d(n) += 3.5;
  EXPECT_DOUBLE_EQ(dae(d, s), 3.5);
}

TEST(Dae, LoopOracle) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = random_scene(gen, 7, 9, 1);
    const auto d = test::random_map(7, 9, 1, 0.0, 200.0, gen);
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t r = 0; r < 7; ++r) {
      for (std::size_t c = 0; c < 9; ++c) {
        if (s.mask.at(r, c)) {
          sum += std::fabs(d.at(r, c) - s.depth.at(r, c));
          ++cnt;
        }
      }
    }
    EXPECT_NEAR(dae(d, s), sum / cnt, 1e-12);
  }
}

TEST(Dae, SymmetricAndTriangle) {
  std::mt19937_64 gen(6);
  const auto s = random_scene(gen, 6, 6, 1);
  const auto a = test::random_map(6, 6, 1, 0.0, 200.0, gen);
  const auto b = test::random_map(6, 6, 1, 0.0, 200.0, gen);
  // Swap roles: scene built from a, estimate taken from the reference.
  auto sa = s;
  for (std::size_t n = 0; n < 36; ++n) {
    if (s.mask(n)) sa.depth(n) = a(n);
  }
  EXPECT_NEAR(dae(a, s), dae(copy_depth(s), sa), 1e-12);
  auto sb = s;
  for (std::size_t n = 0; n < 36; ++n) {
    if (s.mask(n)) sb.depth(n) = b(n);
  }
  EXPECT_LE(dae(a, s), dae(b, s) + dae(a, sb) + 1e-12);
}

TEST(Dae, Errors) {
  auto s = tiny_scene();
  EXPECT_THROW(dae(Map(3, 2, 1), s), MetricError);
  for (auto& m : s.mask.data()) m = 0;
  EXPECT_THROW(dae(Map(2, 3, 1), s), MetricError);
}

TEST(Iae, IdentityAndScaling) {
  const auto s = tiny_scene();
  const auto same = iae(s.reflectivity, s);
  ASSERT_EQ(same.size(), 2u);
  EXPECT_EQ(same[0], 0.0);
  EXPECT_EQ(same[1], 0.0);
  auto twice = s.reflectivity;
  for (auto& v : twice.data()) v *= 2.0;
  const auto e = iae(twice, s);
  EXPECT_DOUBLE_EQ(e[0], 1.0);
  EXPECT_DOUBLE_EQ(e[1], 1.0);
}

TEST(Iae, LoopOracle) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = random_scene(gen, 5, 8, 3);
    const auto r = test::random_map(5, 8, 3, 0.0, 3.0, gen);
    const auto got = iae(r, s);
    for (std::size_t k = 0; k < 3; ++k) {
      double num = 0.0, den = 0.0;
      for (std::size_t row = 0; row < 5; ++row) {
        for (std::size_t c = 0; c < 8; ++c) {
          num += std::fabs(s.reflectivity.at(row, c, k) - r.at(row, c, k));
          den += std::fabs(s.reflectivity.at(row, c, k));
        }
      }
      EXPECT_NEAR(got[k], num / den, 1e-12);
    }
  }
}

TEST(Iae, ZeroReferenceMassThrows) {
  auto s = tiny_scene();
  for (std::size_t n = 0; n < 6; ++n) s.reflectivity(n, 1) = 0.0;
  EXPECT_THROW(iae(s.reflectivity, s), MetricError);
  EXPECT_THROW(iae(Map(2, 3, 1), tiny_scene()), MetricError);
}

TEST(Detection, PerfectEstimate) {
  const auto s = tiny_scene();
  const auto m = detection_metrics(copy_depth(s), s.reflectivity, s, default_taus());
  ASSERT_EQ(m.pd.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(m.pd[i], 1.0);
    EXPECT_EQ(m.false_detections[i], 0u);
    EXPECT_EQ(m.iae_detection[i][0], 0.0);
  }
}

TEST(Detection, OffsetBeyondTau) {
  const auto s = tiny_scene();
  for (double tau : default_taus()) {
    auto d = copy_depth(s);
    for (std::size_t n = 0; n < 5; ++n) d(n) += tau + 1.0;
    const auto m = detection_metrics(d, s.reflectivity, s, {tau});
    EXPECT_EQ(m.pd[0], 0.0);
    EXPECT_EQ(m.false_detections[0], 5u);
    // Every target pixel charged its full reference share.
    EXPECT_DOUBLE_EQ(m.iae_detection[0][0], 1.0);
    EXPECT_DOUBLE_EQ(m.iae_detection[0][1], 1.0);
    // Exactly at tau still counts.
    auto edge = copy_depth(s);
    for (std::size_t n = 0; n < 5; ++n) edge(n) -= tau;
    EXPECT_EQ(detection_metrics(edge, s.reflectivity, s, {tau}).pd[0], 1.0);
  }
}

TEST(Detection, MixedClassificationOracle) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<double> taus{0.5, 1, 2, 5, 10, 20, 50};
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_scene(gen, 8, 8, 2);
    Map d(8, 8, 1), r(8, 8, 2);
    for (std::size_t n = 0; n < 64; ++n) {
      const double ref = s.mask(n) ? s.depth(n) : 100.0;
      d(n) = ref + (u(gen) - 0.5) * 60.0;
      const bool point = u(gen) < 0.7;
      for (std::size_t k = 0; k < 2; ++k) r(n, k) = point ? u(gen) * 3.0 : 0.0;
    }
    const auto m = detection_metrics(d, r, s, taus);
    double mass[2] = {0, 0};
    for (std::size_t n = 0; n < 64; ++n)
      for (std::size_t k = 0; k < 2; ++k) mass[k] += s.reflectivity(n, k);
    for (std::size_t i = 0; i < taus.size(); ++i) {
      std::size_t hit = 0, fd = 0, tgt = 0;
      double err[2] = {0, 0};
      for (std::size_t n = 0; n < 64; ++n) {
        const bool point = r(n, 0) + r(n, 1) > 0.0;
        if (!s.mask(n)) {
          fd += point;
          continue;
        }
        ++tgt;
        const bool ok = point && std::fabs(d(n) - s.depth(n)) <= taus[i];
        hit += ok;
        fd += point && !ok;
        for (std::size_t k = 0; k < 2; ++k) {
          err[k] += ok ? std::fabs(s.reflectivity(n, k) - r(n, k)) : s.reflectivity(n, k);
        }
      }
      EXPECT_DOUBLE_EQ(m.pd[i], static_cast<double>(hit) / static_cast<double>(tgt));
      EXPECT_EQ(m.false_detections[i], fd);
      for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_NEAR(m.iae_detection[i][k], err[k] / mass[k], 1e-12);
      }
      EXPECT_GE(m.pd[i], 0.0);
      EXPECT_LE(m.pd[i], 1.0);
      if (i > 0) {
        EXPECT_GE(m.pd[i], m.pd[i - 1]);
        EXPECT_LE(m.false_detections[i], m.false_detections[i - 1]);
      }
    }
  }
}

TEST(Detection, EmptyMaskThrows) {
  auto s = tiny_scene();
  for (auto& m : s.mask.data()) m = 0;
  EXPECT_THROW(detection_metrics(Map(2, 3, 1), s.reflectivity, s, {1.0}), MetricError);
}

TEST(Units, BinsToMeters) {
  // 20 ps per bin, half the round trip: about 3 mm.
  EXPECT_NEAR(bins_to_meters(1.0, 20.0), 0.0029979245799999997, 1e-15);
  EXPECT_DOUBLE_EQ(bins_to_meters(10.0, 2.0, 2e8), 10.0 * 2e-12 * 2e8 / 2.0);
  EXPECT_EQ(bins_to_meters(0.0, 20.0), 0.0);
}

TEST(Evaluate, ReportFieldsAreConsistent) {
  const auto s = tiny_scene();
  Reconstruction rec;
  rec.depth = copy_depth(s);
  for (std::size_t n = 0; n < 5; ++n) rec.depth(n) += 2.0;
  rec.reflectivity = s.reflectivity;
  rec.runtime_s = 0.25;
  const auto rep = evaluate("prop", rec, s, 20.0, default_taus());
  EXPECT_EQ(rep.algorithm, "prop");
  EXPECT_DOUBLE_EQ(rep.dae_bins, 2.0);
  EXPECT_DOUBLE_EQ(rep.dae_m, bins_to_meters(2.0, 20.0));
  EXPECT_EQ(rep.iae[0], 0.0);
  EXPECT_EQ(rep.detection.pd[0], 0.0);  // tau 1
  EXPECT_EQ(rep.detection.pd[1], 1.0);  // tau 2
  EXPECT_EQ(rep.runtime_s, 0.25);
}

TEST(Baselines, ClassMatchesCoreOperators) {
  const auto sir = test::gaussian_sir(2.0, 2);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto y = test::random_cube(6, 5, 80, 2, seed, 0.4);
    const auto rec = run_class(y, sir);
    EXPECT_EQ(rec.depth, ml_depth(y, sir).depth);
    EXPECT_EQ(rec.reflectivity, ml_reflectivity(y));
  }
}

TEST(Baselines, SingleCountPixelPicksThatBin) {
  const auto sir = test::gaussian_sir(2.0, 1);
  HistogramCube y(3, 3, 100, 1);
  for (std::size_t n = 0; n < 9; ++n) y.histogram(0, n)[20 + 5 * n] = 1;
  const auto rec = run_class(y, sir);
  for (std::size_t n = 0; n < 9; ++n) {
    EXPECT_EQ(rec.depth(n), static_cast<double>(20 + 5 * n)) << n;
    EXPECT_EQ(rec.reflectivity(n), 1.0);
  }
}

TEST(Baselines, XcorrEqualsClassWithoutBackground) {
  // Returns only in the left columns, within a narrow depth band, so the
  // estimated background field is identically zero.
  const auto sir = test::gaussian_sir(2.0, 2);
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> dd(30, 50), off(-1, 1), cnt(1, 6);
  HistogramCube y(16, 32, 128, 2);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 16; ++c) {
      const std::size_t n = r * 32 + c;
      const int d = dd(gen);
      for (std::size_t k = 0; k < 2; ++k) {
        auto h = y.histogram(k, n);
        for (int j = cnt(gen); j > 0; --j) h[static_cast<std::size_t>(d + off(gen))] += 1;
      }
    }
  }
  const auto cfg = default_scale_config(3);
  const auto bg = estimate_background(window_sum(y, cfg.windows.back()));
  for (double v : bg.pixel_level) ASSERT_EQ(v, 0.0);
  const auto a = run_class(y, sir);
  const auto b = run_xcorr(y, sir, cfg);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.reflectivity, b.reflectivity);
}

TEST(Baselines, XcorrRecoversDepthAtHighFlux) {
  const auto spec = spec_for(24, 6, 100.0, 1000.0, BackgroundShape::uniform(), 4);
  const auto y = sample_histograms(spec);
  const auto rec = run_xcorr(y, spec.sir, default_scale_config(3));
  for (std::size_t n = 0; n < spec.scene.pixels(); ++n) {
    if (spec.scene.mask(n)) {
      EXPECT_EQ(rec.depth(n), spec.scene.depth(n)) << n;
    }
  }
}

TEST(Baselines, XcorrBeatsClassUnderGammaBackground) {
  const auto spec = spec_for(32, 8, 0.1, 10.0, BackgroundShape::gamma(2.0, 30.0), 11);
  const auto y = sample_histograms(spec);
  const auto truth = calibrated_truth(spec);
  const double dc = dae(run_class(y, spec.sir).depth, truth);
  const double dx = dae(run_xcorr(y, spec.sir, default_scale_config(3)).depth, truth);
  EXPECT_LT(dx, dc);
}
