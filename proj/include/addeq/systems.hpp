#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "addeq/core/int128.hpp"

namespace addeq {

using Point = std::vector<std::int64_t>;
using SolutionTuple = std::vector<Point>;
using Lambda = std::vector<std::int64_t>;

struct Monomial {
  std::vector<int> exps;
  std::int64_t coef = 0;
  int degree() const { return std::accumulate(exps.begin(), exps.end(), 0); }
};

/// A system of r homogeneous integer polynomials in d variables.
class PolySystem {
 public:
  PolySystem() = default;
  PolySystem(int d, std::vector<std::vector<Monomial>> polys, std::string name = "custom")
      : d_(d), polys_(std::move(polys)), name_(std::move(name)) {
    validate();
  }

  int dimension() const { return d_; }
  int rank() const { return static_cast<int>(polys_.size()); }
  const std::vector<std::vector<Monomial>>& polys() const { return polys_; }
  const std::vector<int>& degrees() const { return degrees_; }
  int degree() const { return *std::max_element(degrees_.begin(), degrees_.end()); }
  int weight() const { return std::accumulate(degrees_.begin(), degrees_.end(), 0); }
  const std::string& name() const { return name_; }

  /// Sum of |coef| over the monomials of polynomial j.
  std::int64_t coefficient_mass(int j) const {
    std::int64_t m = 0;
    for (const auto& mono : polys_[static_cast<std::size_t>(j)]) m += mono.coef < 0 ? -mono.coef : mono.coef;
    return m;
  }

 private:
  void validate() {
    if (d_ < 1) throw std::invalid_argument("PolySystem: dimension must be >= 1");
    if (polys_.empty()) throw std::invalid_argument("PolySystem: no polynomials");
    std::vector<bool> used(static_cast<std::size_t>(d_), false);
    degrees_.clear();
    for (const auto& poly : polys_) {
      int deg = -1;
      bool any = false;
      for (const auto& m : poly) {
        if (static_cast<int>(m.exps.size()) != d_)
          throw std::invalid_argument("PolySystem: exponent vector has wrong length");
        for (int e : m.exps)
          if (e < 0) throw std::invalid_argument("PolySystem: negative exponent");
        if (m.coef == 0) continue;
        any = true;
        if (deg < 0) deg = m.degree();
        if (m.degree() != deg) throw std::invalid_argument("PolySystem: polynomial is not homogeneous");
        if (deg == 0) throw std::invalid_argument("PolySystem: constant polynomial");
        for (int v = 0; v < d_; ++v)
          if (m.exps[static_cast<std::size_t>(v)] > 0) used[static_cast<std::size_t>(v)] = true;
      }
      if (!any) throw std::invalid_argument("PolySystem: zero polynomial");
      degrees_.push_back(deg);
    }
    for (int v = 0; v < d_; ++v)
      if (!used[static_cast<std::size_t>(v)])
        throw std::invalid_argument("PolySystem: variable " + std::to_string(v + 1) + " does not occur");
  }

  int d_ = 0;
  std::vector<std::vector<Monomial>> polys_;
  std::vector<int> degrees_;
  std::string name_ = "custom";
};

namespace detail {

// Exponent vectors of total degree `deg` in d variables, in decreasing lexicographic order.
inline void compositions(int d, int deg, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  const int pos = static_cast<int>(cur.size());
  if (pos == d - 1) {
    cur.push_back(deg);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int e = deg; e >= 0; --e) {
    cur.push_back(e);
    compositions(d, deg - e, cur, out);
    cur.pop_back();
  }
}

}  // namespace detail

/// All monomials of total degree 1..k in d variables.
inline PolySystem monomial_system(int d, int k) {
  if (d < 1 || k < 1) throw std::invalid_argument("monomial_system: d and k must be >= 1");
  std::vector<std::vector<Monomial>> polys;
  for (int deg = 1; deg <= k; ++deg) {
    std::vector<std::vector<int>> exps;
    std::vector<int> cur;
    detail::compositions(d, deg, cur, exps);
    for (auto& e : exps) polys.push_back({Monomial{e, 1}});
  }
  return PolySystem(d, std::move(polys), "monomial(d=" + std::to_string(d) + ",k=" + std::to_string(k) + ")");
}

/// (x_1, ..., x_d, x_1^2 + ... + x_d^2).
inline PolySystem parabola_system(int d) {
  if (d < 1) throw std::invalid_argument("parabola_system: d must be >= 1");
  std::vector<std::vector<Monomial>> polys;
  for (int j = 0; j < d; ++j) {
    std::vector<int> e(static_cast<std::size_t>(d), 0);
    e[static_cast<std::size_t>(j)] = 1;
    polys.push_back({Monomial{e, 1}});
  }
  std::vector<Monomial> sq;
  for (int j = 0; j < d; ++j) {
    std::vector<int> e(static_cast<std::size_t>(d), 0);
    e[static_cast<std::size_t>(j)] = 2;
    sq.push_back(Monomial{e, 1});
  }
  polys.push_back(std::move(sq));
  return PolySystem(d, std::move(polys), "parabola(d=" + std::to_string(d) + ")");
}

/// Exact evaluation in 128-bit arithmetic. Throws OverflowError on overflow.
inline std::vector<i128> evaluate(const PolySystem& P, const Point& x) {
  if (static_cast<int>(x.size()) != P.dimension()) throw std::invalid_argument("evaluate: point has wrong dimension");
  std::vector<i128> out;
  out.reserve(static_cast<std::size_t>(P.rank()));
  for (const auto& poly : P.polys()) {
    i128 acc = 0;
    for (const auto& m : poly) {
      i128 term = m.coef;
      for (std::size_t v = 0; v < x.size(); ++v) term = checked_mul(term, checked_pow(x[v], m.exps[v]));
      acc = checked_add(acc, term);
    }
    out.push_back(acc);
  }
  return out;
}

/// Arbitrary-precision evaluation.
inline std::vector<BigInt> evaluate_big(const PolySystem& P, const Point& x) {
  std::vector<BigInt> out;
  for (const auto& poly : P.polys()) {
    BigInt acc = 0;
    for (const auto& m : poly) {
      BigInt term = m.coef;
      for (std::size_t v = 0; v < x.size(); ++v) term *= boost::multiprecision::pow(BigInt(x[v]), static_cast<unsigned>(m.exps[v]));
      acc += term;
    }
    out.push_back(acc);
  }
  return out;
}

/// Upper bound for sum_i |lambda_i| * |P_j(x)| over x in [N]^d, maximised over j.
inline BigInt value_bound(const PolySystem& P, const Lambda& lambda, std::int64_t N) {
  BigInt lam = 0;
  for (auto l : lambda) lam += l < 0 ? -l : l;
  BigInt best = 0;
  for (int j = 0; j < P.rank(); ++j) {
    BigInt b = lam * P.coefficient_mass(j) * boost::multiprecision::pow(BigInt(N), static_cast<unsigned>(P.degrees()[static_cast<std::size_t>(j)]));
    best = std::max(best, b);
  }
  return best;
}

/// True when 128-bit arithmetic is safe for the instance (bound below 2^120).
inline bool fits_i128(const PolySystem& P, const Lambda& lambda, std::int64_t N) {
  return value_bound(P, lambda, N) < (BigInt(1) << 120);
}

inline bool satisfies(const PolySystem& P, const Lambda& lambda, const SolutionTuple& t) {
  if (t.size() != lambda.size()) throw std::invalid_argument("satisfies: tuple length differs from lambda");
  std::vector<BigInt> acc(static_cast<std::size_t>(P.rank()), 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto v = evaluate_big(P, t[i]);
    for (std::size_t j = 0; j < v.size(); ++j) acc[j] += lambda[i] * v[j];
  }
  return std::all_of(acc.begin(), acc.end(), [](const BigInt& b) { return b == 0; });
}

// ---------------------------------------------------------------------------
// Classification

enum class Triviality { Projected, SubsetSum, Nontrivial };

inline const char* to_string(Triviality t) {
  switch (t) {
    case Triviality::Projected: return "projected";
    case Triviality::SubsetSum: return "subset_sum";
    default: return "nontrivial";
  }
}

struct TrivialityClass {
  Triviality tag = Triviality::Nontrivial;
  bool projected = false;
  bool subset_sum = false;
  /// Rank of the difference matrix x_i - x_1 (affine span dimension).
  int affine_rank = 0;
  /// Basis of the direction space of the affine span (rows of the echelon form).
  std::vector<std::vector<BigInt>> affine_basis;
  /// Blocks (0-based indices) of a zero-sum partition with at least two blocks.
  std::vector<std::vector<int>> blocks;
};

inline constexpr int kMaxSubsetSumVariables = 12;

namespace detail {

/// Integer row echelon form (rows kept primitive); returns the nonzero rows.
inline std::vector<std::vector<BigInt>> echelon(std::vector<std::vector<BigInt>> m) {
  if (m.empty()) return {};
  const std::size_t rows = m.size(), cols = m[0].size();
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t piv = r;
    while (piv < rows && m[piv][c] == 0) ++piv;
    if (piv == rows) continue;
    std::swap(m[piv], m[r]);
    for (std::size_t i = r + 1; i < rows; ++i) {
      if (m[i][c] == 0) continue;
      for (std::size_t j = c + 1; j < cols; ++j) m[i][j] = m[r][c] * m[i][j] - m[i][c] * m[r][j];
      m[i][c] = 0;
      BigInt g = 0;
      for (const auto& v : m[i]) g = boost::multiprecision::gcd(g, v);
      if (g > 1)
        for (auto& v : m[i]) v /= g;
    }
    ++r;
  }
  m.resize(r);
  for (auto& row : m) {
    BigInt g = 0;
    for (const auto& v : row) g = boost::multiprecision::gcd(g, v);
    if (g > 1)
      for (auto& v : row) v /= g;
  }
  return m;
}

}  // namespace detail

/// Smallest (by size, then lexicographic) subset of `pool` containing pool[0] whose
/// lambda-sum and equation-sum vanish, excluding the full pool. Empty if none.
inline std::vector<int> minimal_zero_block(const std::vector<int>& pool, const Lambda& lambda,
                                           const std::vector<std::vector<BigInt>>& terms) {
  const int m = static_cast<int>(pool.size());
  const std::size_t r = terms.empty() ? 0 : terms[0].size();
  for (int size = 1; size < m; ++size) {
    // Choose size-1 further elements among pool[1..m-1], lexicographic.
    std::vector<int> idx(static_cast<std::size_t>(size - 1));
    std::iota(idx.begin(), idx.end(), 1);
    while (true) {
      std::int64_t lsum = lambda[static_cast<std::size_t>(pool[0])];
      for (int i : idx) lsum += lambda[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])];
      if (lsum == 0) {
        bool zero = true;
        for (std::size_t j = 0; j < r && zero; ++j) {
          BigInt acc = terms[static_cast<std::size_t>(pool[0])][j];
          for (int i : idx) acc += terms[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])][j];
          zero = acc == 0;
        }
        if (zero) {
          std::vector<int> block{pool[0]};
          for (int i : idx) block.push_back(pool[static_cast<std::size_t>(i)]);
          return block;
        }
      }
      // next combination of (size-1) elements from {1..m-1}
      int k = size - 2;
      while (k >= 0 && idx[static_cast<std::size_t>(k)] == m - 1 - (size - 2 - k)) --k;
      if (k < 0) break;
      ++idx[static_cast<std::size_t>(k)];
      for (int j = k + 1; j < size - 1; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return {};
}

/// Classifies a solution tuple as projected, subset-sum or nontrivial.
/// Projected takes precedence in `tag`; both witnesses are filled when both hold.
inline TrivialityClass classify_solution(const PolySystem& P, const Lambda& lambda, const SolutionTuple& t) {
  if (t.size() != lambda.size()) throw std::invalid_argument("classify_solution: tuple length differs from lambda");
  if (t.size() > static_cast<std::size_t>(kMaxSubsetSumVariables))
    throw std::invalid_argument("classify_solution: s > 12 exceeds the partition search guard");
  TrivialityClass out;
  const int d = P.dimension();
  const std::size_t s = t.size();

  std::vector<std::vector<BigInt>> diff;
  for (std::size_t i = 1; i < s; ++i) {
    std::vector<BigInt> row;
    for (int v = 0; v < d; ++v) row.push_back(BigInt(t[i][static_cast<std::size_t>(v)]) - t[0][static_cast<std::size_t>(v)]);
    diff.push_back(std::move(row));
  }
  out.affine_basis = detail::echelon(diff);
  out.affine_rank = static_cast<int>(out.affine_basis.size());
  out.projected = out.affine_rank < d;

  std::vector<std::vector<BigInt>> terms;
  for (std::size_t i = 0; i < s; ++i) {
    auto v = evaluate_big(P, t[i]);
    for (auto& x : v) x *= lambda[i];
    terms.push_back(std::move(v));
  }
  // A partition into >= 2 zero-sum blocks exists iff a proper zero-sum subset exists
  // (its complement is then zero-sum too). Peel minimal blocks to get a fine witness.
  std::vector<int> pool(s);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::vector<int>> blocks;
  while (!pool.empty()) {
    auto b = minimal_zero_block(pool, lambda, terms);
    if (b.empty()) {
      blocks.push_back(pool);
      break;
    }
    blocks.push_back(b);
    std::vector<int> rest;
    std::set_difference(pool.begin(), pool.end(), b.begin(), b.end(), std::back_inserter(rest));
    pool = std::move(rest);
  }
  if (blocks.size() >= 2) {
    out.subset_sum = true;
    out.blocks = std::move(blocks);
  }
  out.tag = out.projected ? Triviality::Projected : (out.subset_sum ? Triviality::SubsetSum : Triviality::Nontrivial);
  return out;
}

/// Maps every point x to u + q x.
inline SolutionTuple shift_dilate(const SolutionTuple& t, const Point& u, std::int64_t q) {
  SolutionTuple out = t;
  for (auto& x : out) {
    if (x.size() != u.size()) throw std::invalid_argument("shift_dilate: dimension mismatch");
    for (std::size_t v = 0; v < x.size(); ++v) x[v] = u[v] + q * x[v];
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const PolySystem& P) {
  nlohmann::json polys = nlohmann::json::array();
  for (const auto& poly : P.polys()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : poly) arr.push_back({{"exps", m.exps}, {"coef", m.coef}});
    polys.push_back(arr);
  }
  return {{"d", P.dimension()}, {"polys", polys}};
}

inline PolySystem poly_system_from_json(const nlohmann::json& j, std::string name = "custom") {
  const int d = j.at("d").get<int>();
  std::vector<std::vector<Monomial>> polys;
  for (const auto& pj : j.at("polys")) {
    std::vector<Monomial> poly;
    for (const auto& mj : pj) poly.push_back(Monomial{mj.at("exps").get<std::vector<int>>(), mj.at("coef").get<std::int64_t>()});
    polys.push_back(std::move(poly));
  }
  return PolySystem(d, std::move(polys), std::move(name));
}

inline nlohmann::json to_json(const TrivialityClass& c) {
  nlohmann::json basis = nlohmann::json::array();
  for (const auto& row : c.affine_basis) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& v : row) r.push_back(v.str());
    basis.push_back(r);
  }
  return {{"tag", to_string(c.tag)}, {"projected", c.projected}, {"subset_sum", c.subset_sum},
          {"affine_rank", c.affine_rank}, {"affine_basis", basis}, {"blocks", c.blocks}};
}

inline std::string describe_lambda(const Lambda& lambda) {
  std::ostringstream os;
  for (std::size_t i = 0; i < lambda.size(); ++i) os << (i ? " " : "") << lambda[i];
  return os.str();
}

}  // namespace addeq
