#include <random>

#include <gtest/gtest.h>

#include "addeq/restriction.hpp"
#include "oracles.hpp"

using namespace addeq;

namespace {

WeightFn point_mass(std::int64_t N, std::int64_t n0) { return WeightFn::indicator(explicit_points(1, {{n0}}), N); }

WeightFn unit(const WeightFn& g) {
  std::vector<cplx> v = g.values();
  for (auto& x : v) x /= g.l2();
  return WeightFn(1, g.N(), v);
}

}  // namespace

TEST(Grids, Shapes) {
  EXPECT_EQ(natural_grid(3, 4).res, (std::vector<std::int64_t>{4, 16, 64}));
  EXPECT_EQ(convolution_grid(2, 5).res, (std::vector<std::int64_t>{11, 51}));
  EXPECT_DOUBLE_EQ(curve_weight_K(3), 6.0);
  EXPECT_DOUBLE_EQ(default_theta(3), 1.0 / 12.0);
  EXPECT_DOUBLE_EQ(default_tau(3), 1.0 / 6.0);
}

TEST(CurveSum, MatchesPlainLoop) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto g = random_weight(1, 30, WeightKind::RandomComplex, 1);
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> alpha{u(rng), u(rng), u(rng)};
    EXPECT_LT(std::abs(curve_sum(g, alpha) - oracle::curve(g.values(), alpha)), 1e-9);
  }
}

TEST(LevelSets, PointMass) {
  const std::int64_t N = 9;
  const auto g = point_mass(N, 4);
  const auto grid = natural_grid(2, N);
  const double lo = 1.0 / 3.0;
  EXPECT_DOUBLE_EQ(level_set_measure(2, g, 0.99 * lo, grid), 1.0);
  EXPECT_DOUBLE_EQ(level_set_measure(2, g, lo, grid), 1.0);
  EXPECT_DOUBLE_EQ(level_set_measure(2, g, 1.01 * lo, grid), 0.0);
  EXPECT_DOUBLE_EQ(level_set_measure(2, g, 0.0, grid), 1.0);
}

TEST(LevelSets, Monotone) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = random_weight(1, 12, WeightKind::RandomComplex, seed);
    const auto rep = level_sets(2, g, eta_ledger(12), natural_grid(2, 12));
    EXPECT_TRUE(rep.normalized);
    for (std::size_t i = 1; i < rep.measures.size(); ++i) {
      ASSERT_LE(rep.measures[i], rep.measures[i - 1]);
      ASSERT_GE(rep.measures[i], 0.0);
      ASSERT_LE(rep.measures[i], 1.0);
    }
  }
}

TEST(LevelSets, EtaLedgerShape) {
  const auto e = eta_ledger(16);
  EXPECT_EQ(e.size(), 64u + 256u + 1u);
  EXPECT_DOUBLE_EQ(e.front(), 0.0);
  EXPECT_DOUBLE_EQ(e.back(), 1.0);
  EXPECT_DOUBLE_EQ(e[64], 0.25);
  for (std::size_t i = 1; i < e.size(); ++i) EXPECT_GT(e[i], e[i - 1]);
}

TEST(MomentsViaLevelsets, PointMassAndEmptyRange) {
  const auto g = point_mass(16, 7);
  for (double p : {1.5, 2.0, 6.0}) {
    const auto m = moments_via_levelsets(2, g, p, 0.0, 1.0, natural_grid(2, 16));
    EXPECT_NEAR(m.direct, 1.0, 1e-9);
    EXPECT_NEAR(m.via_levelsets, 1.0, 0.05);
  }
  const auto z = moments_via_levelsets(2, random_weight(1, 16, WeightKind::RandomSign, 3), 4, 0.3, 0.3, natural_grid(2, 16));
  EXPECT_EQ(z.via_levelsets, 0.0);
  EXPECT_EQ(z.direct, 0.0);
  EXPECT_THROW(moments_via_levelsets(2, g, 4, 0.5, 0.2, natural_grid(2, 16)), std::invalid_argument);
}

TEST(MomentsViaLevelsets, MatchesExactEvenMoments) {
  const std::int64_t N = 8;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = unit(random_weight(1, N, WeightKind::RandomComplex, 40 + seed));
    for (int p : {2, 4, 6}) {
      const std::int64_t r = std::max(p, 4);
      TorusGrid grid{{r * N + 1, r * N * N + 1}};
      ASSERT_GE(static_cast<double>(grid.size()), 64.0 * N * N);
      const auto m = moments_via_levelsets(2, g, p, 0.0, 1.0, grid);
      const double exact = weighted_even_moment(monomial_system(1, 2), g, p / 2);
      EXPECT_NEAR(m.direct, exact, 1e-9 * exact) << p;
      EXPECT_LE(std::abs(m.via_levelsets - exact), 0.05 * exact) << p << " seed " << seed;
    }
  }
}

TEST(TomasStein, PointMass) {
  const std::int64_t N = 8;
  const auto g = point_mass(N, 3);
  const double lo = 1.0 / std::sqrt(8.0);
  const auto res = tomas_stein_check(2, g, {0.5 * lo, lo, 2.0 * lo}, convolution_grid(2, N));
  ASSERT_EQ(res.size(), 3u);
  EXPECT_NEAR(res[0].lhs, 0.25 * lo * lo * N, 1e-12);
  EXPECT_DOUBLE_EQ(res[0].measure, 1.0);
  for (const auto& r : res) EXPECT_TRUE(r.holds);
  EXPECT_EQ(res[2].measure, 0.0);
  EXPECT_EQ(res[2].lhs, 0.0);
}

TEST(TomasStein, RandomWeights) {
  const std::int64_t N = 8;
  std::vector<double> etas;
  for (int i = 1; i <= 16; ++i) etas.push_back(i / 16.0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto g = random_weight(1, N, static_cast<WeightKind>(seed % 4), seed);
    const auto res = tomas_stein_check(2, g, etas, convolution_grid(2, N));
    for (const auto& r : res) ASSERT_TRUE(r.holds) << seed << " eta=" << r.eta << " " << r.lhs << " > " << r.rhs;
  }
  const auto g = random_weight(1, 6, WeightKind::RandomPhase, 1);
  for (const auto& r : tomas_stein_check(3, g, etas, convolution_grid(3, 6))) EXPECT_TRUE(r.holds);
}

TEST(TomasStein, RequiresConvolutionGrid) {
  EXPECT_THROW(tomas_stein_check(2, WeightFn::constant(1, 8), {0.5}, natural_grid(2, 8)), GuardError);
}

TEST(Majorant, Params) {
  const auto m = majorant_params(3, 64, 18);
  EXPECT_NEAR(m.delta, 3.0 * (1.0 / 6.0 - 0.01), 1e-15);
  EXPECT_THROW(majorant_params(3, 64, 18, 0.0, 0.6), std::invalid_argument);
  EXPECT_THROW(majorant_params(2, 64, 8), std::invalid_argument);
  EXPECT_NEAR(majorant_params(2, 64, 8, 0.01, 0.4).delta, 0.4, 0);
}

TEST(Majorant, Examples) {
  const std::int64_t N = 64;
  const auto m = majorant_params(3, N, 6);
  EXPECT_NEAR(majorant_U({0, 0, 0}, m), std::pow(64.0, 6), 1e-6 * std::pow(64.0, 6));
  EXPECT_EQ(majorant_U({0.3183098861837907, 0.2718281828459045, 0.1414213562373095}, m), 0.0);
  EXPECT_FALSE(majorant_arc({0.3183098861837907, 0.2718281828459045, 0.1414213562373095}, m).on_arc);

  const double tiny = 1e-9;
  const std::vector<double> pt{0.0, 0.0, 0.25 + tiny};
  const auto arc = majorant_arc(pt, m);
  ASSERT_TRUE(arc.on_arc);
  EXPECT_EQ(arc.q, 4);
  // S((0, 0, 1), 4) = sum_u e(u^3 / 4) = 2.
  const double S = std::abs(oracle::gauss_system(monomial_system(1, 3), {0, 0, 1}, 4)) / 4.0;
  EXPECT_NEAR(S, 0.5, 1e-12);
  const double I = std::abs(osc_integral(std::vector<double>{0.0, 0.0, tiny}, 64.0, 1e-10).value);
  EXPECT_NEAR(majorant_U(pt, m), std::pow(S * I, 6), 1e-6 * std::pow(S * I, 6));
}

TEST(Majorant, BoundExamples) {
  const auto b1 = majorant_L1_bound(8, 2, 16, 1, 1e-5);
  EXPECT_DOUBLE_EQ(b1.series, 1.0);
  EXPECT_NEAR(b1.bound, b1.integral * std::pow(16.0, 5), 1e-9 * b1.bound);
  const auto b8 = majorant_L1_bound(8, 2, 8, 3, 1e-5);
  const auto b16 = majorant_L1_bound(8, 2, 16, 3, 1e-5);
  const auto b32 = majorant_L1_bound(8, 2, 32, 3, 1e-5);
  EXPECT_NEAR(b16.bound / b8.bound, 32.0, 1e-9);
  EXPECT_NEAR(b32.bound / b16.bound, 32.0, 1e-9);
  EXPECT_FALSE(b16.below_threshold);
  EXPECT_TRUE(majorant_L1_bound(4, 2, 16, 2, 1e-4).below_threshold);
}

TEST(Majorant, IntegralBelowBound) {
  const auto m = majorant_params(2, 16, 8, 0.01, 0.4);
  const double integral = majorant_integral(m, 24);
  const auto b = majorant_L1_bound(8, 2, 16, 4, 1e-6);
  EXPECT_GT(integral, 0.0);
  EXPECT_LE(integral, 1.02 * b.bound);
}

TEST(Majorant, OverlappingArcsAreSummed) {
  const auto m = majorant_params(3, 32, 6);
  EXPECT_FALSE(m.disjoint());
  EXPECT_TRUE(majorant_params(3, 1 << 20, 6, 0.01, 0.4).disjoint());
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t overlaps = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::int64_t q = 1 + static_cast<std::int64_t>(rng() % 5);
    std::vector<double> x(3);
    for (int j = 0; j < 3; ++j)
      x[static_cast<std::size_t>(j)] = static_cast<double>(rng() % q) / q + u(rng) * std::pow(32.0, m.delta - (j + 1)) / q;
    const auto arcs = majorant_arcs(x, m);
    double sum = 0.0;
    for (const auto& a : arcs) sum += std::pow(std::abs(curve_gauss_sum(a.a, a.q)) / a.q *
                                                   std::abs(osc_integral_curve(a.beta, 32.0, 1e-11 * 32.0).value), 6);
    EXPECT_NEAR(majorant_U(x, m), sum, 1e-9 * std::max(1.0, sum));
    if (arcs.size() > 1) ++overlaps;
  }
  EXPECT_GT(overlaps, 0u);
}

TEST(Majorant, ScanReportsDeviation) {
  const auto m = majorant_params(3, 32, 6);
  const auto s = majorant_scan(m, 200, 4);
  EXPECT_EQ(s.samples, 200u);
  EXPECT_LE(s.dominated, s.samples);
  EXPECT_GE(s.max_deviation, 0.0);
  EXPECT_LE(s.max_deviation_over_N, 1.0);
  EXPECT_EQ(s.to_json().dump(), majorant_scan(m, 200, 4).to_json().dump());
}

TEST(TruncatedMoment, PointMassBelowThreshold) {
  const auto r = truncated_moment_check(3, point_mass(16, 5), 18, default_theta(3), 0.01, natural_grid(3, 16));
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.measure, 0.0);
  EXPECT_TRUE(r.theorem_range);
  EXPECT_GT(r.threshold, 1.0);
}

TEST(TruncatedMoment, FullRangeIsGridMoment) {
  // With the threshold below every value the check is the plain grid moment, exact on a fine grid.
  const std::int64_t N = 6;
  const auto g = random_weight(1, N, WeightKind::RandomComplex, 8);
  TorusGrid grid{{4 * N + 1, 4 * N * N + 1}};
  const auto r = truncated_moment_check(2, g, 4, 20.0, 0.0, grid);
  EXPECT_GT(r.measure, 0.999);
  const double exact = weighted_even_moment(monomial_system(1, 2), g, 2);
  EXPECT_NEAR(r.lhs, exact, 1e-9 * exact);
  EXPECT_NEAR(r.ratio, r.lhs / (std::pow(6.0, 2.0 - 3.0) * std::pow(g.l2(), 4)), 1e-12 * r.ratio);
}

TEST(TruncatedMoment, Deterministic) {
  const auto g = random_weight(1, 8, WeightKind::RandomSign, 2);
  const auto a = truncated_moment_check(3, g, 18, default_theta(3), 0.0, natural_grid(3, 8));
  const auto b = truncated_moment_check(3, g, 18, default_theta(3), 0.0, natural_grid(3, 8));
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}
