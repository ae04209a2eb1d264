#include <random>
#include <set>

#include <gtest/gtest.h>

#include "addeq/systems.hpp"
#include "oracles.hpp"

using namespace addeq;

TEST(MonomialSystem, RankAndWeight) {
  auto P = monomial_system(1, 3);
  EXPECT_EQ(P.rank(), 3);
  EXPECT_EQ(P.weight(), 6);
  EXPECT_EQ(P.degree(), 3);

  auto Q = monomial_system(2, 2);
  EXPECT_EQ(Q.rank(), 5);
  EXPECT_EQ(Q.weight(), 8);

  auto R = monomial_system(1, 1);
  EXPECT_EQ(R.rank(), 1);
  EXPECT_EQ(R.weight(), 1);
}

TEST(MonomialSystem, RankIsBinomial) {
  for (int d = 1; d <= 3; ++d)
    for (int k = 1; k <= 4; ++k) {
      long long binom = 1;
      for (int i = 1; i <= k; ++i) binom = binom * (d + i) / i;
      EXPECT_EQ(monomial_system(d, k).rank(), binom - 1) << d << " " << k;
    }
}

TEST(MonomialSystem, RejectsZero) {
  EXPECT_THROW(monomial_system(0, 2), std::invalid_argument);
  EXPECT_THROW(monomial_system(2, 0), std::invalid_argument);
  EXPECT_THROW(parabola_system(0), std::invalid_argument);
}

TEST(ParabolaSystem, Shape) {
  EXPECT_EQ(parabola_system(1).weight(), 3);
  EXPECT_EQ(parabola_system(2).weight(), 4);
  EXPECT_EQ(parabola_system(3).rank(), 4);
  EXPECT_EQ(parabola_system(3).weight(), 5);
  EXPECT_EQ(parabola_system(2).degree(), 2);
}

TEST(Evaluate, Examples) {
  auto v = evaluate(parabola_system(2), {1, 2});
  EXPECT_EQ(std::vector<long long>(v.begin(), v.end()), (std::vector<long long>{1, 2, 5}));
  v = evaluate(monomial_system(1, 3), {3});
  EXPECT_EQ(std::vector<long long>(v.begin(), v.end()), (std::vector<long long>{3, 9, 27}));
  v = evaluate(monomial_system(2, 2), {2, 3});
  EXPECT_EQ(std::vector<long long>(v.begin(), v.end()), (std::vector<long long>{2, 3, 4, 6, 9}));
}

TEST(Evaluate, MatchesBigIntegerOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> coord(-1000000, 1000000);
  const auto P = monomial_system(2, 4);
  for (int t = 0; t < 200; ++t) {
    Point x{coord(rng), coord(rng)};
    const auto v = evaluate_big(P, x);
    EXPECT_EQ(v, oracle::eval(P, x));
  }
}

TEST(Evaluate, InjectiveOnSmallBoxes) {
  std::vector<PolySystem> systems;
  for (int d = 1; d <= 3; ++d) {
    systems.push_back(parabola_system(d));
    for (int k = 1; k <= 4; ++k)
      if (d < 3 || k <= 2) systems.push_back(monomial_system(d, k));
  }
  for (const auto& P : systems) {
    const std::int64_t N = P.dimension() == 3 ? 12 : 20;
    std::set<std::vector<BigInt>> seen;
    for (const auto& p : oracle::box(P.dimension(), N)) EXPECT_TRUE(seen.insert(evaluate_big(P, p)).second) << P.name();
    EXPECT_GE(P.rank(), P.degree());
  }
}

TEST(Classify, DiagonalIsProjected) {
  const auto P = monomial_system(1, 2);
  const Lambda lambda{1, 1, -1, -1};
  auto c = classify_solution(P, lambda, {{4}, {4}, {4}, {4}});
  EXPECT_EQ(c.tag, Triviality::Projected);
}

TEST(Classify, PairedBlocksAreSubsetSum) {
  const auto P = parabola_system(2);
  const Lambda lambda{1, -1, 1, -1};
  auto c = classify_solution(P, lambda, {{1, 2}, {1, 2}, {3, 1}, {3, 1}});
  EXPECT_TRUE(c.subset_sum);
  ASSERT_EQ(c.blocks.size(), 2u);
  std::set<std::set<int>> blocks;
  for (const auto& b : c.blocks) blocks.insert(std::set<int>(b.begin(), b.end()));
  EXPECT_TRUE(blocks.count({0, 1}) == 1);
  EXPECT_TRUE(blocks.count({2, 3}) == 1);
}

TEST(Classify, ThreeTermProgressionIsNontrivial) {
  auto c = classify_solution(monomial_system(1, 1), {1, -2, 1}, {{1}, {2}, {3}});
  EXPECT_EQ(c.tag, Triviality::Nontrivial);
}

TEST(Classify, BothWitnessesReported) {
  // In dimension one, (a, a, b, b) is subset-sum and spans a line but not a point.
  const auto P = monomial_system(1, 2);
  auto c = classify_solution(P, {1, -1, 1, -1}, {{2}, {2}, {2}, {2}});
  EXPECT_TRUE(c.projected);
  EXPECT_TRUE(c.subset_sum);
  EXPECT_EQ(c.tag, Triviality::Projected);
}

TEST(Classify, GuardOnLargeS) {
  Lambda lambda(13, 1);
  lambda[12] = -12;
  SolutionTuple t(13, Point{1});
  EXPECT_THROW(classify_solution(monomial_system(1, 1), lambda, t), std::invalid_argument);
}

TEST(Classify, AgreesWithOracleOnAllSmallSolutions) {
  struct Case {
    PolySystem P;
    Lambda lambda;
    std::int64_t N;
  };
  std::vector<Case> cases{{monomial_system(1, 1), {1, -2, 1}, 9},
                          {monomial_system(1, 2), {1, 1, -1, -1}, 7},
                          {parabola_system(2), {1, 1, -1, -1}, 3},
                          {monomial_system(1, 1), {1, 1, -1, -1}, 5},
                          {monomial_system(2, 1), {1, -2, 1}, 3}};
  for (const auto& c : cases) {
    for (const auto& t : oracle::solutions(c.P, c.lambda, oracle::box(c.P.dimension(), c.N))) {
      const auto cls = classify_solution(c.P, c.lambda, t);
      EXPECT_EQ(cls.projected, oracle::affine_rank(t) < c.P.dimension());
      EXPECT_EQ(cls.subset_sum, oracle::has_zero_sum_partition(c.P, c.lambda, t));
      EXPECT_EQ(cls.tag == Triviality::Nontrivial, oracle::nontrivial(c.P, c.lambda, t));
    }
  }
}

TEST(ShiftDilate, Examples) {
  const auto P = monomial_system(1, 1);
  const Lambda roth{1, -2, 1};
  auto t = shift_dilate({{1}, {2}, {3}}, {5}, 1);
  EXPECT_EQ(t, (SolutionTuple{{6}, {7}, {8}}));
  EXPECT_TRUE(satisfies(P, roth, t));
  t = shift_dilate({{1}, {2}, {3}}, {0}, 3);
  EXPECT_EQ(t, (SolutionTuple{{3}, {6}, {9}}));
  EXPECT_TRUE(satisfies(P, roth, t));

  const auto Q = parabola_system(2);
  const Lambda lam{1, 1, -1, -1};
  const SolutionTuple base{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  ASSERT_TRUE(satisfies(Q, lam, base));
  EXPECT_TRUE(satisfies(Q, lam, shift_dilate(base, {10, 10}, 2)));
}

TEST(ShiftDilate, PreservesSolutionsAndClasses) {
  std::mt19937_64 rng(17);
  struct Case {
    PolySystem P;
    Lambda lambda;
    std::int64_t N;
  };
  std::vector<Case> cases{{monomial_system(1, 1), {1, -2, 1}, 12},
                          {monomial_system(1, 2), {1, 1, -1, -1}, 8},
                          {parabola_system(2), {1, 1, -1, -1}, 3},
                          {monomial_system(2, 1), {1, 1, -2}, 4}};
  std::uniform_int_distribution<std::int64_t> shift(-1000, 1000), dil(1, 50);
  for (const auto& c : cases) {
    const auto sols = oracle::solutions(c.P, c.lambda, oracle::box(c.P.dimension(), c.N));
    ASSERT_FALSE(sols.empty());
    std::uniform_int_distribution<std::size_t> pick(0, sols.size() - 1);
    for (int i = 0; i < 1000; ++i) {
      const auto& t = sols[pick(rng)];
      Point u(static_cast<std::size_t>(c.P.dimension()));
      for (auto& x : u) x = shift(rng);
      const auto moved = shift_dilate(t, u, dil(rng));
      ASSERT_TRUE(satisfies(c.P, c.lambda, moved));
      EXPECT_EQ(classify_solution(c.P, c.lambda, moved).tag, classify_solution(c.P, c.lambda, t).tag);
    }
  }
}

TEST(Serialization, RoundTrip) {
  for (const auto& P : {monomial_system(2, 3), parabola_system(3)}) {
    const auto j = to_json(P);
    const auto back = poly_system_from_json(j);
    EXPECT_EQ(to_json(back), j);
  }
}

TEST(Serialization, RejectsInhomogeneous) {
  nlohmann::json j = {{"d", 1}, {"polys", {{{{"exps", {1}}, {"coef", 1}}, {{"exps", {2}}, {"coef", 1}}}}}};
  EXPECT_THROW(poly_system_from_json(j), std::invalid_argument);
}
