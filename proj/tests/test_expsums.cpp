#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "addeq/expsums.hpp"
#include "oracles.hpp"

using namespace addeq;

namespace {

std::vector<cplx> as_vector(const WeightFn& w) { return w.values(); }

std::vector<double> random_alpha(std::mt19937_64& rng, int r) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(static_cast<std::size_t>(r));
  for (auto& x : a) x = u(rng);
  return a;
}

bool is_prime(std::int64_t n) {
  if (n < 2) return false;
  for (std::int64_t p = 2; p * p <= n; ++p)
    if (n % p == 0) return false;
  return true;
}

// Smallest prime meeting the modulus invariant, by walking every integer from 2.
std::int64_t naive_modulus(const PolySystem& P, const Lambda& lambda, std::int64_t N) {
  std::int64_t lam = 0;
  for (auto l : lambda) lam += std::abs(l);
  for (std::int64_t M = 2;; ++M) {
    if (!is_prime(M)) continue;
    bool ok = true;
    for (auto l : lambda) ok = ok && std::gcd(M, std::abs(l)) == 1;
    for (int j = 0; ok && j < P.rank(); ++j) {
      const int k = P.degrees()[static_cast<std::size_t>(j)];
      ok = oracle::ipow(M, k) > oracle::BigInt(lam) * P.coefficient_mass(j) * oracle::ipow(N, k);
    }
    if (ok) return M;
  }
}

}  // namespace

TEST(WeightFn, CachedNorms) {
  const auto w = random_weight(2, 9, WeightKind::RandomComplex, 4);
  double l2 = 0, linf = 0;
  for (const auto& v : w.values()) {
    l2 += std::norm(v);
    linf = std::max(linf, std::abs(v));
  }
  EXPECT_NEAR(w.l2(), std::sqrt(l2), 1e-12 * std::sqrt(l2));
  EXPECT_NEAR(w.linf(), linf, 1e-12 * linf);
  auto v = w;
  v.set(3, 10.0);
  EXPECT_DOUBLE_EQ(v.linf(), 10.0);
}

TEST(WeightFn, RejectsWrongSize) { EXPECT_THROW(WeightFn(2, 3, std::vector<cplx>(8)), std::invalid_argument); }

TEST(WeylSum, Examples) {
  const auto P = parabola_system(2);
  const auto one = WeightFn::constant(2, 7);
  const auto z = weyl_sum(P, one, {0, 0, 0});
  EXPECT_NEAR(z.real(), 49.0, 1e-12);
  EXPECT_NEAR(z.imag(), 0.0, 1e-12);

  const auto point = WeightFn::indicator(explicit_points(2, {{3, 5}}), 7);
  EXPECT_NEAR(std::abs(weyl_sum(P, point, {0.3, 0.7, 0.123})), 1.0, 1e-14);

  const auto w = weyl_sum(monomial_system(1, 2), WeightFn::constant(1, 2), {0.0, 0.5});
  EXPECT_NEAR(std::abs(w), 0.0, 1e-14);
}

TEST(WeylSum, MatchesPlainLoop) {
  std::mt19937_64 rng(8);
  for (const auto& P : {monomial_system(1, 3), parabola_system(2), monomial_system(2, 2)}) {
    const std::int64_t N = P.dimension() == 1 ? 40 : 9;
    const auto a = random_weight(P.dimension(), N, WeightKind::RandomComplex, rng());
    for (int t = 0; t < 20; ++t) {
      const auto alpha = random_alpha(rng, P.rank());
      const auto lib = weyl_sum(P, a, alpha);
      const auto ref = oracle::weyl(P, as_vector(a), N, alpha);
      EXPECT_LT(std::abs(lib - ref), 1e-9 * a.l2() * std::sqrt(static_cast<double>(a.size()))) << P.name();
    }
  }
}

TEST(ParabolaSplit, Examples) {
  for (int d = 1; d <= 3; ++d) {
    const auto v = parabola_weyl_split(0.0, std::vector<double>(static_cast<std::size_t>(d), 0.0), 6);
    EXPECT_NEAR(v.real(), std::pow(6.0, d), 1e-9);
  }
  const auto g = parabola_G(0.31, 0.77, 15);
  const auto both = parabola_weyl_split(0.31, {0.77, 0.77}, 15);
  EXPECT_LT(std::abs(both - g * g), 1e-9 * std::abs(both) + 1e-12);
}

TEST(ParabolaSplit, AgreesWithDirectSum) {
  std::mt19937_64 rng(12);
  const std::int64_t N = 20;
  for (int d = 1; d <= 3; ++d) {
    const auto P = parabola_system(d);
    const auto one = WeightFn::constant(d, N);
    const int points = 1000;
    double worst = 0;
    for (int t = 0; t < points; ++t) {
      const auto alpha = random_alpha(rng, P.rank());
      const std::vector<double> theta(alpha.begin(), alpha.begin() + d);
      const auto split = parabola_weyl_split(alpha.back(), theta, N);
      const auto direct = weyl_sum(P, one, alpha);
      worst = std::max(worst, std::abs(split - direct) / std::max(1.0, std::abs(direct)));
    }
    EXPECT_LE(worst, 1e-9) << "d=" << d;
  }
}

TEST(ChooseModulus, Examples) {
  EXPECT_EQ(choose_modulus(monomial_system(1, 2), {1, -2, 1}, 10).M, 41);
  EXPECT_EQ(choose_modulus(monomial_system(1, 1), {1, -1}, 5).M, 11);
  EXPECT_THROW(choose_modulus(monomial_system(1, 1), {1, 0}, 5), std::invalid_argument);
}

TEST(ChooseModulus, SmallestValidPrime) {
  std::vector<std::pair<PolySystem, Lambda>> cases{{monomial_system(1, 1), {3, -5, 2}},
                                                   {monomial_system(1, 2), {1, 1, -2}},
                                                   {parabola_system(2), {1, 1, -1, -1}},
                                                   {monomial_system(2, 2), {7, -7}},
                                                   {monomial_system(1, 3), {2, 3, -5}}};
  for (const auto& [P, lam] : cases)
    for (std::int64_t N : {1, 4, 13, 30}) {
      const auto mod = choose_modulus(P, lam, N);
      EXPECT_EQ(mod.M, naive_modulus(P, lam, N)) << P.name() << " N=" << N;
      for (auto l : lam) EXPECT_EQ(std::gcd(mod.M, std::abs(l)), 1);
      EXPECT_EQ(mod.moduli.size(), static_cast<std::size_t>(P.rank()));
    }
}

TEST(HSum, Examples) {
  const auto P = parabola_system(1);
  const auto mod = choose_modulus(P, {1, -1}, 6);
  const auto h = h_sum(P, WeightFn::constant(1, 6), {0, 0}, mod);
  EXPECT_NEAR(h.real(), 1.0, 1e-15);
  const auto point = WeightFn::indicator(explicit_points(1, {{4}}), 6);
  EXPECT_NEAR(std::abs(h_sum(P, point, {5, 17}, mod)), 1.0 / 6.0, 1e-15);
}

TEST(HSum, EqualsRescaledWeylSum) {
  std::mt19937_64 rng(21);
  const auto P = monomial_system(2, 2);
  const std::int64_t N = 7;
  const auto mod = choose_modulus(P, {1, -2, 1}, N);
  for (int t = 0; t < 20; ++t) {
    const auto f = random_weight(2, N, WeightKind::RandomComplex, rng());
    std::vector<std::int64_t> xi;
    std::vector<double> alpha;
    for (auto m : mod.moduli) {
      xi.push_back(static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(m)));
      alpha.push_back(static_cast<double>(xi.back()) / static_cast<double>(m));
    }
    const auto h = h_sum(P, f, xi, mod);
    const auto F = weyl_sum(P, f, alpha) / static_cast<double>(N * N);
    EXPECT_LT(std::abs(h - F), 1e-12);
  }
}

TEST(HTable, MatchesPointwise) {
  std::mt19937_64 rng(5);
  const auto P = monomial_system(1, 2);
  const std::int64_t N = 4;
  const auto mod = choose_modulus(P, {1, 1, -2}, N);
  const auto f = random_weight(1, N, WeightKind::RandomPhase, 9);
  const auto table = h_table(P, f, mod);
  ASSERT_EQ(table.size(), mod.group_size());
  for (int t = 0; t < 200; ++t) {
    const std::size_t idx = rng() % table.size();
    EXPECT_LT(std::abs(table[idx] - h_sum(P, f, mod.unflatten(idx), mod)), 1e-12);
    EXPECT_EQ(mod.flatten(mod.unflatten(idx)), idx);
  }
}

TEST(HTable, ReindexingPreservesModuli) {
  const auto P = monomial_system(1, 2);
  const Lambda lam{3, -5, 2};
  const std::int64_t N = 5;
  const auto mod = choose_modulus(P, lam, N);
  const auto table = h_table(P, random_weight(1, N, WeightKind::RandomComplex, 2), mod);
  std::vector<double> base;
  for (const auto& v : table) base.push_back(std::abs(v));
  std::sort(base.begin(), base.end());
  for (auto l : lam) {
    std::vector<double> moved;
    for (std::size_t idx = 0; idx < table.size(); ++idx) {
      auto xi = mod.unflatten(idx);
      for (auto& x : xi) x *= l;
      moved.push_back(std::abs(table[mod.flatten(xi)]));
    }
    std::sort(moved.begin(), moved.end());
    for (std::size_t i = 0; i < base.size(); ++i) ASSERT_NEAR(moved[i], base[i], 1e-14) << l;
  }
}

TEST(TOperator, OnesGiveScaledCount) {
  const auto P = monomial_system(1, 1);
  const Lambda lam{1, -2, 1};
  const std::int64_t N = 12;
  std::vector<WeightFn> ones(3, WeightFn::constant(1, N));
  const auto res = t_operator(P, lam, ones, N, TMode::Direct);
  const double scale = std::pow(res.mod.D, 1) * std::pow(static_cast<double>(N), -(3.0 - 1.0));
  EXPECT_NEAR(res.value.real(), scale * static_cast<double>(to_ld(count_solutions(P, lam, N))), 1e-12);
}

TEST(TOperator, ZeroWeightGivesZero) {
  const auto P = monomial_system(1, 1);
  const std::int64_t N = 10;
  std::vector<WeightFn> fs{WeightFn::constant(1, N), WeightFn::constant(1, N, 0.0), WeightFn::constant(1, N)};
  EXPECT_EQ(t_operator(P, {1, -2, 1}, fs, N, TMode::Direct).value, cplx(0.0));
  EXPECT_EQ(t_operator(P, {1, -2, 1}, fs, N, TMode::Spectral).value, cplx(0.0));
}

TEST(TOperator, RejectsUnbalancedLambda) {
  std::vector<WeightFn> fs(2, WeightFn::constant(1, 5));
  EXPECT_THROW(t_operator(monomial_system(1, 1), {1, 2}, fs, 5, TMode::Direct), std::invalid_argument);
}

TEST(TOperator, SpectralCapIsAGuard) {
  std::vector<WeightFn> fs(3, WeightFn::constant(1, 20));
  EXPECT_THROW(t_operator(monomial_system(1, 2), {1, -2, 1}, fs, 20, TMode::Spectral, {}, 1000), GuardError);
}

TEST(TOperator, RothDualModes) {
  const std::int64_t N = 50;
  std::vector<WeightFn> fs;
  for (int i = 0; i < 3; ++i) fs.push_back(random_weight(1, N, WeightKind::RandomComplex, 100 + i));
  const auto direct = t_operator(monomial_system(1, 1), {1, -2, 1}, fs, N, TMode::Direct).value;
  const auto spectral = t_operator(monomial_system(1, 1), {1, -2, 1}, fs, N, TMode::Spectral).value;
  EXPECT_LT(std::abs(direct - spectral), 1e-6 * std::max(1.0, std::abs(direct)));
}

TEST(TOperator, DualModesOnRandomFamilies) {
  std::mt19937_64 rng(31);
  const std::vector<std::pair<PolySystem, Lambda>> cases{{monomial_system(1, 1), {1, 1, -2}},
                                                         {monomial_system(1, 1), {2, -3, 1}},
                                                         {monomial_system(1, 2), {1, 1, -1, -1}},
                                                         {monomial_system(1, 2), {1, -2, 1}}};
  for (int fam = 0; fam < 20; ++fam) {
    const auto& [P, lam] = cases[static_cast<std::size_t>(fam) % cases.size()];
    const std::int64_t N = P.degree() == 1 ? 30 : 6;
    std::vector<WeightFn> fs;
    for (std::size_t i = 0; i < lam.size(); ++i)
      fs.push_back(random_weight(1, N, static_cast<WeightKind>(1 + rng() % 3), rng()));
    const auto direct = t_operator(P, lam, fs, N, TMode::Direct).value;
    const auto spectral = t_operator(P, lam, fs, N, TMode::Spectral).value;
    EXPECT_LT(std::abs(direct - spectral), 1e-6 * std::max(1.0, std::abs(direct))) << fam;
  }
}

TEST(GridMoment, Parseval) {
  const auto P = monomial_system(1, 1);
  const std::int64_t N = 17;
  const auto one = WeightFn::constant(1, N);
  const auto m = grid_moment(P, one, 2, TorusGrid{exact_resolution(P, N, 2)});
  EXPECT_TRUE(m.exact);
  EXPECT_NEAR(m.value, 17.0, 1e-9);

  const auto a = random_weight(2, 4, WeightKind::RandomComplex, 3);
  const auto Q = parabola_system(2);
  const auto ma = grid_moment(Q, a, 2, TorusGrid{exact_resolution(Q, 4, 2)});
  EXPECT_NEAR(ma.value, a.l2() * a.l2(), 1e-9 * a.l2() * a.l2());
}

TEST(GridMoment, FourthMomentIsVinogradov) {
  const auto P = monomial_system(1, 2);
  const auto m = grid_moment(P, WeightFn::constant(1, 10), 4, TorusGrid{exact_resolution(P, 10, 4)});
  EXPECT_TRUE(m.exact);
  EXPECT_NEAR(m.value, 190.0, 190.0 * 1e-9);
}

TEST(GridMoment, WarnsBelowThreshold) {
  const auto m = grid_moment(monomial_system(1, 2), WeightFn::constant(1, 10), 4, TorusGrid{{8, 8}});
  EXPECT_FALSE(m.exact);
  EXPECT_FALSE(m.warning.empty());
}

TEST(GridMoment, EvenMomentsMatchCounting) {
  const std::vector<PolySystem> systems{monomial_system(1, 1), monomial_system(1, 2), parabola_system(1)};
  for (const auto& P : systems) {
    const std::int64_t N = 6;
    const auto a = random_weight(1, N, WeightKind::RandomComplex, 77);
    for (int s = 1; s <= 3; ++s) {
      const auto grid = grid_moment(P, a, 2 * s, TorusGrid{exact_resolution(P, N, 2 * s)});
      const double count = weighted_even_moment(P, a, s);
      EXPECT_NEAR(grid.value, count, 1e-9 * count) << P.name() << " s=" << s;
    }
    const auto unweighted = grid_moment(P, WeightFn::constant(1, N), 4, TorusGrid{exact_resolution(P, N, 4)});
    EXPECT_NEAR(unweighted.value, static_cast<double>(to_ld(vinogradov_J(P, 2, N))), 1e-9 * unweighted.value);
  }
}
