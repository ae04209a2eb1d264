#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "addeq/increment.hpp"
#include "oracles.hpp"

using namespace addeq;

namespace {

PointSet interval_set(std::int64_t lo, std::int64_t hi, std::int64_t step = 1) {
  std::vector<Point> pts;
  for (std::int64_t n = lo; n <= hi; n += step) pts.push_back({n});
  return explicit_points(1, std::move(pts));
}

// Numbers in [1, N] whose base-3 expansion of n - 1 avoids the digit 2.
PointSet cantor_set(std::int64_t N) {
  std::vector<Point> pts;
  for (std::int64_t n = 0; n < N; ++n) {
    bool ok = true;
    for (auto m = n; m > 0; m /= 3)
      if (m % 3 == 2) ok = false;
    if (ok) pts.push_back({n + 1});
  }
  return explicit_points(1, std::move(pts));
}

Factor interval_factor(std::int64_t N, std::int64_t side) {
  Factor B;
  B.d = 1;
  B.N = N;
  std::int64_t start = 0;
  for (; start + side <= N; start += side) B.atoms.push_back({{start}, 1, side});
  for (auto n = start + 1; n <= N; ++n) B.xi.push_back({n});
  return B;
}

WeightFn random_fn(int d, std::int64_t N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(N);
  std::vector<cplx> v(total);
  for (auto& x : v) x = {g(rng), g(rng)};
  return WeightFn(d, N, std::move(v));
}

cplx inner(const WeightFn& f, const WeightFn& g) {
  cplx s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * std::conj(g[i]);
  return s;
}

double l2sq(const WeightFn& f) { return std::real(inner(f, f)); }

const PolySystem kRoth = monomial_system(1, 1);
const Lambda kRothLambda{1, 1, -2};

}  // namespace

TEST(BalancedFn, FullBoxIsZero) {
  for (int d = 1; d <= 2; ++d) {
    const auto b = balanced_fn(box_points(d, 7), 7);
    EXPECT_EQ(b.delta, Rational(1));
    for (std::size_t i = 0; i < b.f.size(); ++i) EXPECT_EQ(b.f[i], cplx(0.0));
  }
}

TEST(BalancedFn, HalfIntervalIsPlusMinusHalf) {
  const auto b = balanced_fn(interval_set(1, 50), 100);
  EXPECT_EQ(b.delta, Rational(1, 2));
  double sum = 0;
  for (std::size_t i = 0; i < b.f.size(); ++i) {
    EXPECT_DOUBLE_EQ(b.f[i].real(), i < 50 ? 0.5 : -0.5);
    sum += b.f[i].real();
  }
  EXPECT_EQ(sum, 0.0);
  EXPECT_LE(b.f.linf(), 1.0);
}

TEST(BalancedFn, RandomSetsHaveExactZeroSum) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const int d = 1 + static_cast<int>(seed % 2);
    const std::int64_t N = d == 1 ? 997 : 31;
    const auto A = random_set(d, N, 0.1 * static_cast<double>(seed % 7 + 1), seed);
    if (A.size() == 0) continue;
    const auto b = balanced_fn(A, N);
    // Exact numerators: |A| (total - a) + (total - |A|) (-a) over a common denominator.
    Rational sum = 0;
    for (std::size_t i = 0; i < b.f.size(); ++i) sum += Rational(b.f[i].real() > 0 ? b.numerator_one : b.numerator_zero, b.denominator);
    EXPECT_EQ(sum, Rational(0)) << seed;
    EXPECT_EQ(b.delta, Rational(static_cast<std::int64_t>(A.size()), b.denominator));
    EXPECT_LE(b.f.linf(), 1.0);
  }
}

TEST(BalancedFn, EmptySetThrows) { EXPECT_THROW(balanced_fn(explicit_points(1, {}), 10), std::invalid_argument); }

TEST(LargeSpectrum, ZeroFunctionHasEmptySpectrum) {
  const auto mod = choose_modulus(kRoth, kRothLambda, 40);
  const auto sp = large_spectrum(kRoth, WeightFn::constant(1, 40, 0.0), mod);
  EXPECT_TRUE(sp.freqs.empty());
  EXPECT_FALSE(sp.met);
}

TEST(LargeSpectrum, SingleCharacterIsTopFrequency) {
  const std::int64_t N = 60;
  const auto mod = choose_modulus(kRoth, kRothLambda, N);
  for (std::int64_t xi0 : {std::int64_t{1}, std::int64_t{7}, mod.M - 3}) {
    std::vector<cplx> v(static_cast<std::size_t>(N));
    for (std::int64_t n = 1; n <= N; ++n) v[static_cast<std::size_t>(n - 1)] = oracle::e(-static_cast<double>(xi0 * n) / static_cast<double>(mod.M));
    const auto sp = large_spectrum(kRoth, WeightFn(1, N, v), mod);
    ASSERT_TRUE(sp.met);
    ASSERT_FALSE(sp.freqs.empty());
    EXPECT_EQ(sp.freqs[0], std::vector<std::int64_t>{xi0});
    EXPECT_NEAR(std::abs(sp.values[0]), 1.0, 1e-9);
    for (std::size_t i = 1; i < sp.values.size(); ++i) EXPECT_LE(std::abs(sp.values[i]), std::abs(sp.values[i - 1]));
  }
}

TEST(LargeSpectrum, ProgressionAlignsWithDifference) {
  // Multiples of 4 correlate with characters of period 4 in Z_M.
  const std::int64_t N = 200;
  const auto A = interval_set(4, N, 4);
  const auto b = balanced_fn(A, N);
  const auto mod = choose_modulus(kRoth, kRothLambda, N);
  const auto sp = large_spectrum(kRoth, b.f, mod);
  ASSERT_FALSE(sp.freqs.empty());
  const double phase = static_cast<double>(sp.freqs[0][0]) / static_cast<double>(mod.M);
  const double frac = 4.0 * phase - std::round(4.0 * phase);
  EXPECT_LT(std::abs(frac), 4.0 * 4.0 / static_cast<double>(N));
}

TEST(SimultaneousApprox, Examples) {
  const auto zero = simultaneous_approx(std::vector<double>{0.0, 0.0, 0.0}, 3, 50);
  EXPECT_EQ(zero.q, 1);
  EXPECT_EQ(zero.achieved, 0.0);

  const auto third = simultaneous_approx(std::vector<RationalAngle>{{1, 3}}, 2, 3);
  EXPECT_EQ(third.q, 3);
  EXPECT_EQ(third.achieved, 0.0);

  const auto half = simultaneous_approx(std::vector<double>{0.5}, 1, 2);
  EXPECT_EQ(half.q, 2);
  EXPECT_EQ(half.achieved, 0.0);
  EXPECT_TRUE(half.bound_met);

  EXPECT_THROW(simultaneous_approx(std::vector<double>{0.1}, 1, 0), std::invalid_argument);
}

TEST(SimultaneousApprox, MatchesExactSearch) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const int T = 1 + static_cast<int>(rng() % 3);
    const int k = 1 + static_cast<int>(rng() % 3);
    const std::int64_t L = 1 + static_cast<std::int64_t>(rng() % 60);
    std::vector<RationalAngle> th;
    std::vector<oracle::Rational> ex;
    for (int i = 0; i < T; ++i) {
      const std::int64_t den = 2 + static_cast<std::int64_t>(rng() % 997);
      const std::int64_t num = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(den));
      th.push_back({num, den});
      ex.emplace_back(num, den);
    }
    const auto r = simultaneous_approx(th, k, L);
    const auto [q, v] = oracle::best_q(ex, k, L);
    EXPECT_EQ(r.q, q) << t;
    EXPECT_NEAR(r.achieved, v.convert_to<double>(), 1e-15) << t;
  }
}

TEST(Linearize, ConstantPhasesGiveOneAtom) {
  for (int d = 1; d <= 2; ++d) {
    const auto B = linearize({}, 20, d);
    ASSERT_EQ(B.atoms.size(), 1u);
    EXPECT_TRUE(B.xi.empty());
    EXPECT_EQ(B.atoms[0].size(), d == 1 ? 20 : 400);
    EXPECT_TRUE(B.verify_partition());
  }
}

TEST(Linearize, LinearPhaseIntervalsBySweep) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::int64_t den = 1000 + static_cast<std::int64_t>(rng() % 100000);
    const PhaseFunction ph{1, den, {{{1}, static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(den))}}};
    LinearizeParams lp;
    lp.target = 0.1;
    const std::int64_t N = 500;
    const auto B = linearize({ph}, N, 1, lp);
    ASSERT_TRUE(B.verify_partition());
    for (const auto& a : B.atoms) {
      std::vector<std::int64_t> vals;
      a.for_each([&](const Point& p) { vals.push_back(ph.eval_num(p)); });
      EXPECT_LE(oracle::pairwise_diameter(vals, den).convert_to<double>(), 0.1 + 1e-12);
    }
  }
}

TEST(Linearize, TwoQuadraticPhases) {
  const PhaseFunction a{1, 1000003, {{{2}, 12345}, {{1}, 777}}};
  const PhaseFunction b{1, 1000003, {{{2}, 500001}}};
  LinearizeParams lp;
  lp.target = 0.05;
  const auto B = linearize({a, b}, 4096, 1, lp);
  EXPECT_TRUE(B.verify_partition());
  EXPECT_NO_THROW(B.labels());
  for (const auto& atom : B.atoms) {
    for (const auto* ph : {&a, &b}) {
      std::vector<std::int64_t> vals;
      atom.for_each([&](const Point& p) { vals.push_back(ph->eval_num(p)); });
      EXPECT_LE(circular_diameter(vals, ph->den), 0.05 + 1e-12);
    }
  }
}

TEST(Linearize, TwoDimensionalPartition) {
  const PhaseFunction ph{2, 9973, {{{2, 0}, 1234}, {{1, 1}, 55}, {{0, 1}, 4000}}};
  LinearizeParams lp;
  lp.target = 0.2;
  const auto B = linearize({ph}, 96, 2, lp);
  EXPECT_TRUE(B.verify_partition());
  for (const auto& atom : B.atoms) EXPECT_LE(cube_diameter({ph}, atom), 0.2 + 1e-12);
}

TEST(Linearize, CircularDiameterMatchesPairwise) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 300; ++t) {
    const std::int64_t den = 2 + static_cast<std::int64_t>(rng() % 500);
    std::vector<std::int64_t> v(1 + rng() % 12);
    for (auto& x : v) x = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(den));
    EXPECT_NEAR(circular_diameter(v, den), oracle::pairwise_diameter(v, den).convert_to<double>(), 1e-15) << t;
  }
}

TEST(CondExpectation, FullAndTrivialFactors) {
  const auto f = random_fn(2, 6, 7);
  const auto full = cond_expectation(f, Factor::full(2, 6));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_LT(std::abs(full[i] - f[i]), 1e-15);
  const auto triv = cond_expectation(f, Factor::trivial(2, 6));
  cplx mean = 0;
  for (std::size_t i = 0; i < f.size(); ++i) mean += f[i];
  mean /= static_cast<double>(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_LT(std::abs(triv[i] - mean), 1e-12);
  EXPECT_THROW(cond_expectation(f, Factor::trivial(2, 5)), std::invalid_argument);
}

TEST(CondExpectation, ProjectionProperties) {
  const std::int64_t N = 300;
  for (std::int64_t side : {1, 7, 40, 300}) {
    const auto B = interval_factor(N, side);
    ASSERT_TRUE(B.verify_partition());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto f = random_fn(1, N, seed);
      const auto g = random_fn(1, N, seed + 100);
      const auto Ef = cond_expectation(f, B);
      const auto EEf = cond_expectation(Ef, B);
      for (std::size_t i = 0; i < f.size(); ++i) EXPECT_LT(std::abs(EEf[i] - Ef[i]), 1e-12);
      const auto Eg = cond_expectation(g, B);
      EXPECT_LT(std::abs(inner(Ef, g) - inner(f, Eg)) / static_cast<double>(N), 1e-12);
      EXPECT_LE(l2sq(Ef), l2sq(f) * (1 + 1e-12));
      const auto lab = B.labels();
      cplx sf = 0, sE = 0;
      for (std::size_t i = 0; i < lab.size(); ++i)
        if (lab[i] >= 0) {
          sf += f[i];
          sE += Ef[i];
        }
      EXPECT_LT(std::abs(sf - sE), 1e-9);
    }
  }
}

TEST(CondExpectation, ExactRationalMeans) {
  const auto B = interval_factor(10, 3);
  std::vector<Rational> f;
  for (int i = 1; i <= 10; ++i) f.emplace_back(i, 7);
  const auto E = cond_expectation_exact(f, B);
  EXPECT_EQ(E[0], Rational(2, 7));
  EXPECT_EQ(E[4], Rational(5, 7));
  EXPECT_EQ(E[8], Rational(8, 7));
  EXPECT_EQ(cond_expectation_exact(E, B), E);
}

TEST(L2Increment, UnionOfAtomsHasDensityOne) {
  const auto B = interval_factor(100, 10);
  const auto A = interval_set(21, 40);
  const auto inc = l2_increment(A, B, 0.05);
  ASSERT_TRUE(inc.found);
  EXPECT_EQ(inc.density, Rational(1));
  EXPECT_GE(static_cast<double>(inc.density), inc.lower_bound);
  // Ties go to the lexicographically smallest base point.
  EXPECT_EQ(inc.atom.u, Point{20});
}

TEST(L2Increment, ConcentratedSetPicksItsAtom) {
  const auto B = interval_factor(120, 12);
  std::vector<Point> pts;
  for (std::int64_t n = 61; n <= 71; ++n) pts.push_back({n});
  pts.push_back({5});
  pts.push_back({100});
  const auto inc = l2_increment(explicit_points(1, pts), B, 0.05);
  ASSERT_TRUE(inc.found);
  EXPECT_EQ(inc.atom.u, Point{60});
  EXPECT_EQ(inc.density, Rational(11, 12));
  EXPECT_GE(static_cast<double>(inc.density) + 1e-12, (1 + 0.5 * 0.05 * 0.05) * static_cast<double>(inc.delta) - inc.correction);
}

TEST(L2Increment, RandomSetHasSmallEnergy) {
  const std::int64_t N = 5000;
  const auto B = interval_factor(N, 50);
  int none = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto A = random_set(1, N, 0.3, seed);
    const auto inc = l2_increment(A, B, 0.5);
    if (!inc.found) ++none;
    EXPECT_LT(static_cast<double>(inc.energy_sq), 0.02) << seed;
  }
  EXPECT_EQ(none, 20);
}

TEST(DirectSearch, FindsAndExhausts) {
  const auto sr = find_nontrivial_solution(kRoth, kRothLambda, interval_set(1, 10), 1 << 20, 1 << 24);
  ASSERT_TRUE(sr.solution.has_value());
  EXPECT_TRUE(oracle::nontrivial(kRoth, kRothLambda, *sr.solution));
  const auto none = find_nontrivial_solution(kRoth, kRothLambda, explicit_points(1, {{1}, {2}, {4}, {8}}), 1 << 20, 1 << 24);
  EXPECT_FALSE(none.solution.has_value());
  EXPECT_TRUE(none.complete);
  EXPECT_EQ(oracle::count(kRoth, kRothLambda, {{1}, {2}, {4}, {8}}), oracle::count(kRoth, kRothLambda, {{1}, {2}, {4}, {8}}));
  for (const auto& t : oracle::solutions(kRoth, kRothLambda, {{1}, {2}, {4}, {8}})) EXPECT_FALSE(oracle::nontrivial(kRoth, kRothLambda, t));
}

TEST(IncrementStep, FullIntervalAndEvens) {
  const auto full = increment_step(interval_set(1, 30), 30, kRoth, kRothLambda);
  ASSERT_TRUE(full.is_solution());
  const auto evens = increment_step(interval_set(2, 60, 2), 60, kRoth, kRothLambda);
  ASSERT_TRUE(evens.is_solution());
  const auto& t = std::get<SolutionFound>(evens.value).tuple;
  EXPECT_TRUE(oracle::nontrivial(kRoth, kRothLambda, t));
  for (const auto& p : t) EXPECT_EQ(p[0] % 2, 0);
  EXPECT_EQ(full.to_json()["outcome"], "solution");
  EXPECT_THROW(increment_step(interval_set(1, 5), 5, kRoth, {1, 1, -1}), std::invalid_argument);
}

TEST(IncrementStep, CantorSetIncrementIsVerified) {
  const std::int64_t N = 81;
  const auto A = cantor_set(N);
  for (double target : {0.05, 0.1}) {
    IncrementParams ip;
    ip.linearize.target = target;
    const auto out = increment_step(A, N, kRoth, kRothLambda, ip);
    ASSERT_FALSE(out.is_exhausted()) << out.to_json().dump();
    if (const auto* inc = std::get_if<IncrementFound>(&out.value)) {
      EXPECT_GT(inc->delta_new, inc->delta);
      std::int64_t hits = 0;
      for (const auto& p : A.points)
        if (inc->atom.contains(p)) ++hits;
      EXPECT_EQ(Rational(hits, inc->atom.size()), inc->delta_new);
      EXPECT_EQ(inc->delta, Rational(static_cast<std::int64_t>(A.size()), N));
      const auto j = out.to_json();
      EXPECT_EQ(j["outcome"], "increment");
      EXPECT_TRUE(j.contains("spectrum"));
      EXPECT_TRUE(j.contains("factor"));
    } else {
      EXPECT_TRUE(oracle::nontrivial(kRoth, kRothLambda, std::get<SolutionFound>(out.value).tuple));
    }
  }
}

TEST(FindSolution, DenseRandomSet) {
  const std::int64_t N = 5000;
  const auto A = random_set(1, N, 0.3, 11);
  const auto r = find_solution(A, N, kRoth, kRothLambda);
  ASSERT_EQ(r.stop, "solution");
  ASSERT_TRUE(r.solution.has_value());
  EXPECT_TRUE(oracle::nontrivial(kRoth, kRothLambda, *r.solution));
  for (const auto& p : *r.solution) EXPECT_TRUE(std::binary_search(A.points.begin(), A.points.end(), p));
}

TEST(FindSolution, SolutionFreeSetIsExhausted) {
  const auto r = find_solution(explicit_points(1, {{1}, {2}, {4}, {8}}), 8, kRoth, kRothLambda);
  EXPECT_EQ(r.stop, "exhausted");
  EXPECT_FALSE(r.solution.has_value());
  ASSERT_FALSE(r.trace.empty());
  EXPECT_EQ(r.trace.back()["stage"], "exhausted");
}

TEST(FindSolution, ParabolaFullBox) {
  const Lambda lam{1, 1, -1, -1};
  // In one dimension the parabola system only has diagonal solutions.
  const auto P1 = parabola_system(1);
  for (const auto& t : oracle::solutions(P1, lam, oracle::box(1, 12))) EXPECT_FALSE(oracle::nontrivial(P1, lam, t));
  EXPECT_EQ(find_solution(box_points(1, 12), 12, P1, lam).stop, "exhausted");

  const auto P2 = parabola_system(2);
  const auto r = find_solution(box_points(2, 6), 6, P2, lam);
  ASSERT_EQ(r.stop, "solution");
  EXPECT_TRUE(oracle::nontrivial(P2, lam, *r.solution));
}

TEST(FindSolution, RescaledSolutionsMapBack) {
  const std::int64_t N = 243;
  const auto A = cantor_set(N);
  IncrementParams ip;
  ip.linearize.target = 0.05;
  const auto r = find_solution(A, N, kRoth, kRothLambda, ip);
  EXPECT_LE(r.iterations, iteration_cap(static_cast<double>(A.size()) / N, ip.kappa, ip.iteration_slack));
  if (r.solution) {
    EXPECT_TRUE(oracle::nontrivial(kRoth, kRothLambda, *r.solution));
    for (const auto& p : *r.solution) EXPECT_TRUE(std::binary_search(A.points.begin(), A.points.end(), p));
  }
  // Each increment record reports a strictly larger density.
  for (const auto& rec : r.trace)
    if (rec["stage"] == "increment") {
      std::istringstream a(rec["delta"].get<std::string>()), b(rec["delta_new"].get<std::string>());
      Rational x, y;
      a >> x;
      b >> y;
      EXPECT_GT(y, x);
    }
}

TEST(FindSolution, TraceIsJsonLines) {
  const auto r = find_solution(cantor_set(81), 81, kRoth, kRothLambda);
  const auto text = r.trace_jsonl();
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("stage"));
    EXPECT_TRUE(j.contains("step"));
    EXPECT_TRUE(j.contains("N"));
    ++n;
  }
  EXPECT_EQ(n, r.trace.size());
  EXPECT_GE(n, 1u);
}

TEST(PointSets, ReadAndValidate) {
  std::istringstream in("3 4\n# comment\n\n1 2\n");
  const auto A = read_point_set(in, 2);
  EXPECT_EQ(A.size(), 2u);
  std::istringstream bad("1 2 3\n");
  EXPECT_THROW(read_point_set(bad, 2), std::exception);
  EXPECT_EQ(random_set(1, 100, 0.3, 5).points, random_set(1, 100, 0.3, 5).points);
}
