#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "addeq/core/errors.hpp"
#include "addeq/core/int128.hpp"
#include "addeq/systems.hpp"

namespace addeq {

using Rational = boost::multiprecision::cpp_rational;

/// A finite set of points of Z^d, either the box [N]^d or an explicit list.
struct PointSet {
  int d = 1;
  std::vector<Point> points;
  std::optional<std::int64_t> box;  // set when points == [N]^d

  std::size_t size() const { return points.size(); }
};

/// [N]^d in row-major order (last coordinate fastest).
inline PointSet box_points(int d, std::int64_t N) {
  if (d < 1 || N < 1) throw std::invalid_argument("box_points: d and N must be >= 1");
  PointSet ps{d, {}, N};
  std::int64_t total = 1;
  for (int i = 0; i < d; ++i) total *= N;
  ps.points.reserve(static_cast<std::size_t>(total));
  Point cur(static_cast<std::size_t>(d), 1);
  for (std::int64_t t = 0; t < total; ++t) {
    ps.points.push_back(cur);
    for (int v = d - 1; v >= 0; --v) {
      if (++cur[static_cast<std::size_t>(v)] <= N) break;
      cur[static_cast<std::size_t>(v)] = 1;
    }
  }
  return ps;
}

inline PointSet explicit_points(int d, std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  for (const auto& p : pts)
    if (static_cast<int>(p.size()) != d) throw std::invalid_argument("explicit_points: dimension mismatch");
  return PointSet{d, std::move(pts), std::nullopt};
}

/// Resource caps for representation tables.
struct TableLimits {
  std::uint64_t dense_cells = std::uint64_t{1} << 25;
  std::uint64_t sparse_entries = std::uint64_t{1} << 24;
  bool force_big_keys = false;
};

enum class TableBackend { Dense, Sparse, Big };

inline const char* to_string(TableBackend b) {
  switch (b) {
    case TableBackend::Dense: return "dense";
    case TableBackend::Sparse: return "sparse";
    default: return "big";
  }
}

namespace detail {

inline i128 big_to_i128(const BigInt& x) {
  const BigInt hi = x >> 64;
  const BigInt lo = x - (hi << 64);
  return static_cast<i128>(static_cast<std::int64_t>(hi)) * (static_cast<i128>(1) << 64) +
         static_cast<i128>(static_cast<std::uint64_t>(lo));
}

struct U128Hash {
  std::size_t operator()(u128 v) const noexcept {
    const std::uint64_t lo = static_cast<std::uint64_t>(v), hi = static_cast<std::uint64_t>(v >> 64);
    return std::hash<std::uint64_t>{}(lo ^ (hi * 0x9e3779b97f4a7c15ULL));
  }
};

}  // namespace detail

template <class W>
class RepTable;

template <class W>
RepTable<W> rep_table(const PolySystem& P, const Lambda& lambdas, const PointSet& pts,
                      const std::vector<std::vector<W>>* weights = nullptr, const TableLimits& limits = {});

/// Representation function v -> weighted number of (x_1..x_m) with sum lambda_i P(x_i) = v.
/// W is std::uint64_t for plain counts and std::complex<double> for weighted sums.
template <class W>
class RepTable {
 public:
  using BigKey = std::vector<BigInt>;

  TableBackend backend() const { return backend_; }
  const Lambda& lambdas() const { return lambdas_; }
  std::size_t set_size() const { return set_size_; }
  std::optional<std::int64_t> box() const { return box_; }
  int rank() const { return r_; }

  std::size_t nonzero() const {
    switch (backend_) {
      case TableBackend::Dense:
        return static_cast<std::size_t>(std::count_if(dense_.begin(), dense_.end(), [](const W& w) { return w != W{}; }));
      case TableBackend::Sparse: return sparse_.size();
      default: return big_.size();
    }
  }

  W total_mass() const {
    W t{};
    for_each_big([&](const BigKey&, const W& w) { t += w; });
    return t;
  }

  W at(const std::vector<i128>& v) const {
    if (backend_ == TableBackend::Big) {
      BigKey k;
      for (auto x : v) k.push_back(to_big(x));
      return at_big(k);
    }
    u128 idx = 0;
    for (int j = 0; j < r_; ++j) {
      const i128 off = v[static_cast<std::size_t>(j)] - mins_[static_cast<std::size_t>(j)];
      if (off < 0 || off >= spans_[static_cast<std::size_t>(j)]) return W{};
      idx += static_cast<u128>(off) * strides_[static_cast<std::size_t>(j)];
    }
    if (backend_ == TableBackend::Dense) return dense_[static_cast<std::size_t>(idx)];
    auto it = sparse_.find(idx);
    return it == sparse_.end() ? W{} : it->second;
  }

  W at_big(const BigKey& v) const {
    if (backend_ == TableBackend::Big) {
      auto it = big_.find(v);
      return it == big_.end() ? W{} : it->second;
    }
    std::vector<i128> k;
    const BigInt lim = BigInt(1) << 126;
    for (const auto& x : v) {
      if (x > lim || x < -lim) return W{};
      k.push_back(detail::big_to_i128(x));
    }
    return at(k);
  }

  /// Visits nonzero entries with 128-bit keys. Not available for the Big backend.
  template <class Fn>
  void for_each(Fn&& fn) const {
    std::vector<i128> key(static_cast<std::size_t>(r_));
    auto decode = [&](u128 idx) {
      for (int j = 0; j < r_; ++j) {
        const u128 sj = strides_[static_cast<std::size_t>(j)];
        const u128 q = idx / sj;
        idx -= q * sj;
        key[static_cast<std::size_t>(j)] = mins_[static_cast<std::size_t>(j)] + static_cast<i128>(q);
      }
    };
    if (backend_ == TableBackend::Dense) {
      for (std::size_t i = 0; i < dense_.size(); ++i) {
        if (dense_[i] == W{}) continue;
        decode(i);
        fn(key, dense_[i]);
      }
    } else if (backend_ == TableBackend::Sparse) {
      std::vector<std::pair<u128, W>> items(sparse_.begin(), sparse_.end());
      std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (const auto& [idx, w] : items) {
        decode(idx);
        fn(key, w);
      }
    } else {
      throw std::logic_error("RepTable::for_each: big backend has no 128-bit keys");
    }
  }

  template <class Fn>
  void for_each_big(Fn&& fn) const {
    if (backend_ == TableBackend::Big) {
      for (const auto& [k, w] : big_) fn(k, w);
      return;
    }
    for_each([&](const std::vector<i128>& key, const W& w) {
      BigKey k;
      for (auto x : key) k.push_back(to_big(x));
      fn(k, w);
    });
  }

  template <class V>
  friend RepTable<V> rep_table(const PolySystem&, const Lambda&, const PointSet&,
                               const std::vector<std::vector<V>>*, const TableLimits&);

 private:
  TableBackend backend_ = TableBackend::Dense;
  int r_ = 0;
  Lambda lambdas_;
  std::size_t set_size_ = 0;
  std::optional<std::int64_t> box_;
  std::vector<i128> mins_;
  std::vector<i128> spans_;
  std::vector<u128> strides_;
  std::vector<W> dense_;
  std::unordered_map<u128, W, detail::U128Hash> sparse_;
  std::map<BigKey, W> big_;
};

namespace detail {

struct Layout {
  std::vector<i128> mins, spans;
  std::vector<u128> strides;
  BigInt cells = 1;
  bool packable = true;
};

inline Layout make_layout(const std::vector<BigInt>& mins, const std::vector<BigInt>& maxs) {
  Layout L;
  const std::size_t r = mins.size();
  std::vector<BigInt> spans(r);
  for (std::size_t j = 0; j < r; ++j) {
    spans[j] = maxs[j] - mins[j] + 1;
    L.cells *= spans[j];
  }
  const BigInt lim = BigInt(1) << 126;
  L.packable = L.cells < lim;
  for (std::size_t j = 0; j < r && L.packable; ++j) L.packable = mins[j] > -lim && maxs[j] < lim;
  if (!L.packable) return L;
  L.mins.resize(r);
  L.spans.resize(r);
  L.strides.resize(r);
  u128 stride = 1;
  for (std::size_t jj = r; jj-- > 0;) {
    L.mins[jj] = big_to_i128(mins[jj]);
    L.spans[jj] = big_to_i128(spans[jj]);
    L.strides[jj] = stride;
    stride *= static_cast<u128>(L.spans[jj]);
  }
  return L;
}

}  // namespace detail

/// Builds the representation table of sum_i lambda_i P(x_i) over x_i in `pts`.
/// `weights`, if given, holds one weight per point for each variable; the entry of a
/// tuple is the product of its weights.
template <class W>
RepTable<W> rep_table(const PolySystem& P, const Lambda& lambdas, const PointSet& pts,
                      const std::vector<std::vector<W>>* weights, const TableLimits& limits) {
  if (lambdas.empty()) throw std::invalid_argument("rep_table: lambdas must be nonempty");
  if (pts.d != P.dimension()) throw std::invalid_argument("rep_table: point set dimension differs from system");
  if (weights && weights->size() != lambdas.size()) throw std::invalid_argument("rep_table: one weight vector per variable");
  const std::size_t r = static_cast<std::size_t>(P.rank());
  const std::size_t n = pts.size();
  const std::size_t m = lambdas.size();

  RepTable<W> T;
  T.r_ = static_cast<int>(r);
  T.lambdas_ = lambdas;
  T.set_size_ = n;
  T.box_ = pts.box;
  if (n == 0) {
    T.backend_ = TableBackend::Big;
    return T;
  }

  std::vector<std::vector<BigInt>> vals(n);
  for (std::size_t p = 0; p < n; ++p) vals[p] = evaluate_big(P, pts.points[p]);
  std::vector<BigInt> vmin(r), vmax(r);
  for (std::size_t j = 0; j < r; ++j) {
    vmin[j] = vmax[j] = vals[0][j];
    for (std::size_t p = 1; p < n; ++p) {
      vmin[j] = std::min(vmin[j], vals[p][j]);
      vmax[j] = std::max(vmax[j], vals[p][j]);
    }
  }
  // Per-step contribution ranges.
  auto contrib = [&](std::int64_t lam, std::size_t j, bool lo) {
    const BigInt a = vmin[j] * lam, b = vmax[j] * lam;
    return lo ? std::min(a, b) : std::max(a, b);
  };
  std::vector<std::vector<BigInt>> step_min(m + 1, std::vector<BigInt>(r, 0)), step_max = step_min;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      step_min[i + 1][j] = step_min[i][j] + contrib(lambdas[i], j, true);
      step_max[i + 1][j] = step_max[i][j] + contrib(lambdas[i], j, false);
    }
  const auto final_layout = detail::make_layout(step_min[m], step_max[m]);
  BigInt tuples = 1;
  for (std::size_t i = 0; i < m; ++i) tuples *= n;

  auto weight = [&](std::size_t var, std::size_t p) -> W {
    if (!weights) return W{1};
    return (*weights)[var][p];
  };

  bool values_fit = true;
  for (std::size_t i = 0; i <= m && values_fit; ++i) values_fit = detail::make_layout(step_min[i], step_max[i]).packable;

  if (limits.force_big_keys || !values_fit) {
    if (std::min(tuples, final_layout.cells) > limits.sparse_entries)
      throw GuardError("rep_table.memory", "estimated " + std::min(tuples, final_layout.cells).str() +
                                                " keys exceed cap " + std::to_string(limits.sparse_entries));
    T.backend_ = TableBackend::Big;
    std::map<std::vector<BigInt>, W> cur;
    for (std::size_t p = 0; p < n; ++p) {
      auto k = vals[p];
      for (auto& x : k) x *= lambdas[0];
      cur[k] += weight(0, p);
    }
    for (std::size_t i = 1; i < m; ++i) {
      std::map<std::vector<BigInt>, W> nxt;
      for (const auto& [k, w] : cur)
        for (std::size_t p = 0; p < n; ++p) {
          auto k2 = k;
          for (std::size_t j = 0; j < r; ++j) k2[j] += vals[p][j] * lambdas[i];
          nxt[k2] += w * weight(i, p);
        }
      cur = std::move(nxt);
    }
    for (auto it = cur.begin(); it != cur.end();) it = (it->second == W{}) ? cur.erase(it) : std::next(it);
    T.big_ = std::move(cur);
    return T;
  }

  std::vector<std::vector<i128>> ivals(n, std::vector<i128>(r));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t j = 0; j < r; ++j) ivals[p][j] = detail::big_to_i128(vals[p][j]);

  const bool dense = final_layout.cells <= limits.dense_cells;
  if (!dense && std::min(tuples, final_layout.cells) > limits.sparse_entries)
    throw GuardError("rep_table.memory", "estimated " + std::min(tuples, final_layout.cells).str() +
                                              " keys exceed cap " + std::to_string(limits.sparse_entries));

  // Offsets of the point contributions for step i relative to that step's minimum.
  auto deltas = [&](std::size_t i, const detail::Layout& L) {
    std::vector<u128> out(n);
    for (std::size_t p = 0; p < n; ++p) {
      u128 idx = 0;
      for (std::size_t j = 0; j < r; ++j) {
        const i128 c = ivals[p][j] * lambdas[i];
        const i128 lo = detail::big_to_i128(contrib(lambdas[i], j, true));
        idx += static_cast<u128>(c - lo) * L.strides[j];
      }
      out[p] = idx;
    }
    return out;
  };
  // Re-encodes an index of layout A into layout B whose minimum differs by the step minimum.
  auto reencode = [&](u128 idx, const detail::Layout& A, const detail::Layout& B) {
    u128 out = 0;
    for (std::size_t j = 0; j < r; ++j) {
      const u128 q = idx / A.strides[j];
      idx -= q * A.strides[j];
      out += q * B.strides[j];
    }
    return out;
  };

  auto L1 = detail::make_layout(step_min[1], step_max[1]);
  if (dense) {
    T.backend_ = TableBackend::Dense;
    std::vector<W> cur(static_cast<std::size_t>(L1.cells));
    const auto d0 = deltas(0, L1);
    for (std::size_t p = 0; p < n; ++p) cur[static_cast<std::size_t>(d0[p])] += weight(0, p);
    auto Lc = L1;
    for (std::size_t i = 1; i < m; ++i) {
      auto Ln = detail::make_layout(step_min[i + 1], step_max[i + 1]);
      std::vector<W> nxt(static_cast<std::size_t>(Ln.cells));
      const auto di = deltas(i, Ln);
      std::vector<W> wi(n);
      for (std::size_t p = 0; p < n; ++p) wi[p] = weight(i, p);
      for (std::size_t c = 0; c < cur.size(); ++c) {
        if (cur[c] == W{}) continue;
        const std::size_t base = static_cast<std::size_t>(reencode(c, Lc, Ln));
        const W w = cur[c];
        for (std::size_t p = 0; p < n; ++p) nxt[base + static_cast<std::size_t>(di[p])] += w * wi[p];
      }
      cur = std::move(nxt);
      Lc = std::move(Ln);
    }
    T.dense_ = std::move(cur);
    T.mins_ = Lc.mins;
    T.spans_ = Lc.spans;
    T.strides_ = Lc.strides;
    return T;
  }

  T.backend_ = TableBackend::Sparse;
  std::unordered_map<u128, W, detail::U128Hash> cur;
  {
    const auto d0 = deltas(0, L1);
    for (std::size_t p = 0; p < n; ++p) cur[d0[p]] += weight(0, p);
  }
  auto Lc = L1;
  for (std::size_t i = 1; i < m; ++i) {
    auto Ln = detail::make_layout(step_min[i + 1], step_max[i + 1]);
    std::unordered_map<u128, W, detail::U128Hash> nxt;
    const auto di = deltas(i, Ln);
    std::vector<std::pair<u128, W>> items(cur.begin(), cur.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [c, w] : items) {
      const u128 base = reencode(c, Lc, Ln);
      for (std::size_t p = 0; p < n; ++p) nxt[base + di[p]] += w * weight(i, p);
      if (nxt.size() > limits.sparse_entries)
        throw GuardError("rep_table.memory", "distinct keys exceed cap " + std::to_string(limits.sparse_entries));
    }
    cur = std::move(nxt);
    Lc = std::move(Ln);
  }
  for (auto it = cur.begin(); it != cur.end();) it = (it->second == W{}) ? cur.erase(it) : std::next(it);
  T.sparse_ = std::move(cur);
  T.mins_ = Lc.mins;
  T.spans_ = Lc.spans;
  T.strides_ = Lc.strides;
  return T;
}

/// sum_v A[v] * B[v].
template <class W, class Acc>
Acc join_tables(const RepTable<W>& A, const RepTable<W>& B, Acc init,
                const std::function<Acc(Acc, const W&, const W&)>& step) {
  const bool big = A.backend() == TableBackend::Big || B.backend() == TableBackend::Big;
  Acc acc = init;
  const bool a_small = A.nonzero() <= B.nonzero();
  const auto& S = a_small ? A : B;
  const auto& L = a_small ? B : A;
  if (big) {
    S.for_each_big([&](const std::vector<BigInt>& k, const W& w) {
      const W o = L.at_big(k);
      if (o != W{}) acc = a_small ? step(acc, w, o) : step(acc, o, w);
    });
  } else {
    S.for_each([&](const std::vector<i128>& k, const W& w) {
      const W o = L.at(k);
      if (o != W{}) acc = a_small ? step(acc, w, o) : step(acc, o, w);
    });
  }
  return acc;
}

namespace detail {

inline u128 count_join(const RepTable<std::uint64_t>& A, const RepTable<std::uint64_t>& B) {
  std::function<u128(u128, const std::uint64_t&, const std::uint64_t&)> step =
      [](u128 acc, const std::uint64_t& a, const std::uint64_t& b) {
        u128 r;
        if (__builtin_add_overflow(acc, static_cast<u128>(a) * b, &r)) throw OverflowError("count overflow");
        return r;
      };
  return join_tables<std::uint64_t, u128>(A, B, 0, step);
}

inline Lambda negated(Lambda l) {
  for (auto& x : l) x = -x;
  return l;
}

}  // namespace detail

/// First-half size: ceil(s/2) (equal point sets on both sides).
inline std::size_t split_point(std::size_t s) { return (s + 1) / 2; }

/// Number of (x_1..x_s) in pts^s with sum_i lambda_i P(x_i) = 0.
inline u128 count_in_set(const PolySystem& P, const Lambda& lambda, const PointSet& A, const TableLimits& limits = {}) {
  if (lambda.empty()) throw std::invalid_argument("count: lambda must be nonempty");
  for (auto l : lambda)
    if (l == 0) throw std::invalid_argument("count: lambda entries must be nonzero");
  if (A.size() == 0) return 0;
  if (lambda.size() == 1) {
    const auto T = rep_table<std::uint64_t>(P, lambda, A, nullptr, limits);
    return T.at(std::vector<i128>(static_cast<std::size_t>(P.rank()), 0));
  }
  const std::size_t m1 = split_point(lambda.size());
  const Lambda l1(lambda.begin(), lambda.begin() + static_cast<std::ptrdiff_t>(m1));
  const Lambda l2 = detail::negated(Lambda(lambda.begin() + static_cast<std::ptrdiff_t>(m1), lambda.end()));
  const auto T1 = rep_table<std::uint64_t>(P, l1, A, nullptr, limits);
  const auto T2 = rep_table<std::uint64_t>(P, l2, A, nullptr, limits);
  return detail::count_join(T1, T2);
}

inline u128 count_solutions(const PolySystem& P, const Lambda& lambda, std::int64_t N, const TableLimits& limits = {}) {
  if (lambda.size() < 2) throw std::invalid_argument("count_solutions: s must be >= 2");
  return count_in_set(P, lambda, box_points(P.dimension(), N), limits);
}

/// J_{s,P}(N): solutions of x_1 + .. + x_s = y_1 + .. + y_s in the values of P.
inline u128 vinogradov_J(const PolySystem& P, int s, std::int64_t N, const TableLimits& limits = {}) {
  if (s < 1) throw std::invalid_argument("vinogradov_J: s must be >= 1");
  Lambda l(static_cast<std::size_t>(s), 1);
  l.insert(l.end(), static_cast<std::size_t>(s), -1);
  return count_solutions(P, l, N, limits);
}

// ---------------------------------------------------------------------------
// Solution enumeration and trivial strata

/// s * d * log2(N) budget under which all solutions are enumerated.
inline constexpr double kEnumerationBudgetBits = 34.0;

inline bool enumeration_feasible(std::size_t s, int d, std::int64_t N) {
  return static_cast<double>(s) * d * std::log2(static_cast<double>(std::max<std::int64_t>(N, 1))) <= kEnumerationBudgetBits;
}

/// Calls fn(tuple) for every solution in A^s, in lexicographic order of (first half, second half).
/// Stops early if fn returns false.
inline void enumerate_solutions(const PolySystem& P, const Lambda& lambda, const PointSet& A,
                                const std::function<bool(const SolutionTuple&)>& fn,
                                std::uint64_t max_half = std::uint64_t{1} << 24) {
  const std::size_t s = lambda.size();
  const std::size_t n = A.size();
  if (s == 0 || n == 0) return;
  const std::size_t m1 = split_point(s), m2 = s - m1;
  const std::size_t r = static_cast<std::size_t>(P.rank());
  std::vector<std::vector<i128>> vals(n);
  for (std::size_t p = 0; p < n; ++p) vals[p] = evaluate(P, A.points[p]);
  auto half = [&](std::size_t off, std::size_t m, bool neg) {
    BigInt cnt = 1;
    for (std::size_t i = 0; i < m; ++i) cnt *= n;
    if (cnt > max_half) throw GuardError("enumerate.size", "half enumeration of " + cnt.str() + " tuples exceeds cap");
    std::vector<std::pair<std::vector<i128>, std::uint64_t>> out;
    out.reserve(static_cast<std::size_t>(cnt));
    std::vector<std::size_t> idx(m, 0);
    const std::uint64_t total = static_cast<std::uint64_t>(cnt);
    for (std::uint64_t t = 0; t < total; ++t) {
      std::vector<i128> key(r, 0);
      std::uint64_t code = 0;
      for (std::size_t i = 0; i < m; ++i) {
        const i128 lam = neg ? -lambda[off + i] : lambda[off + i];
        for (std::size_t j = 0; j < r; ++j) key[j] = checked_add(key[j], checked_mul(lam, vals[idx[i]][j]));
        code = code * n + idx[i];
      }
      out.emplace_back(std::move(key), code);
      for (std::size_t i = m; i-- > 0;) {
        if (++idx[i] < n) break;
        idx[i] = 0;
      }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  };
  const auto H1 = half(0, m1, false);
  const auto H2 = m2 ? half(m1, m2, true) : std::vector<std::pair<std::vector<i128>, std::uint64_t>>{{std::vector<i128>(r, 0), 0}};
  auto decode = [&](std::uint64_t code, std::size_t m, SolutionTuple& out) {
    std::vector<std::size_t> idx(m);
    for (std::size_t i = m; i-- > 0;) {
      idx[i] = static_cast<std::size_t>(code % n);
      code /= n;
    }
    for (auto k : idx) out.push_back(A.points[k]);
  };
  // Emit in lexicographic tuple order: collect matches then sort by codes.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> matches;
  std::size_t i = 0, j = 0;
  while (i < H1.size() && j < H2.size()) {
    if (H1[i].first < H2[j].first) {
      ++i;
    } else if (H2[j].first < H1[i].first) {
      ++j;
    } else {
      std::size_t i2 = i, j2 = j;
      while (i2 < H1.size() && H1[i2].first == H1[i].first) ++i2;
      while (j2 < H2.size() && H2[j2].first == H2[j].first) ++j2;
      for (std::size_t a = i; a < i2; ++a)
        for (std::size_t b = j; b < j2; ++b) matches.emplace_back(H1[a].second, H2[b].second);
      i = i2;
      j = j2;
    }
  }
  std::sort(matches.begin(), matches.end());
  for (const auto& [c1, c2] : matches) {
    SolutionTuple t;
    decode(c1, m1, t);
    if (m2) decode(c2, m2, t);
    if (!fn(t)) return;
  }
}

struct TwoEqual {
  int i;  // 0-based
  int j;
};
struct ProjectedKind {};
struct SubsetSumKind {};
using TrivialKind = std::variant<ProjectedKind, SubsetSumKind, TwoEqual>;

/// Count of solutions in [N]^d with x_i = x_j.
inline u128 count_two_equal(const PolySystem& P, const Lambda& lambda, std::int64_t N, TwoEqual te,
                            const TableLimits& limits = {}) {
  const int s = static_cast<int>(lambda.size());
  if (te.i == te.j || te.i < 0 || te.j < 0 || te.i >= s || te.j >= s)
    throw std::invalid_argument("count_trivial: TwoEqual needs distinct valid indices");
  const int a = std::min(te.i, te.j), b = std::max(te.i, te.j);
  Lambda reduced;
  const std::int64_t merged = lambda[static_cast<std::size_t>(a)] + lambda[static_cast<std::size_t>(b)];
  u128 free_factor = 1;
  for (int k = 0; k < s; ++k) {
    if (k == b) continue;
    if (k == a) {
      if (merged != 0) reduced.push_back(merged);
      continue;
    }
    reduced.push_back(lambda[static_cast<std::size_t>(k)]);
  }
  if (merged == 0)
    for (int v = 0; v < P.dimension(); ++v) free_factor *= static_cast<u128>(N);
  if (reduced.empty()) return free_factor;
  return free_factor * count_in_set(P, reduced, box_points(P.dimension(), N), limits);
}

/// Exact count of a trivial stratum; nullopt when the stratum cannot be enumerated.
/// SubsetSumKind counts every solution admitting a zero-sum partition (projected or not).
inline std::optional<u128> count_trivial(const PolySystem& P, const Lambda& lambda, std::int64_t N, const TrivialKind& kind,
                                         const TableLimits& limits = {}) {
  if (const auto* te = std::get_if<TwoEqual>(&kind)) return count_two_equal(P, lambda, N, *te, limits);
  const bool projected = std::holds_alternative<ProjectedKind>(kind);
  if (projected && P.dimension() == 1) {
    std::int64_t sum = 0;
    for (auto l : lambda) sum += l;
    return sum == 0 ? static_cast<u128>(N) : 0;
  }
  if (!enumeration_feasible(lambda.size(), P.dimension(), N)) return std::nullopt;
  u128 count = 0;
  enumerate_solutions(P, lambda, box_points(P.dimension(), N), [&](const SolutionTuple& t) {
    const auto c = classify_solution(P, lambda, t);
    if (projected ? c.projected : c.subset_sum) ++count;
    return true;
  });
  return count;
}

// ---------------------------------------------------------------------------
// Reports

struct CountReport {
  std::string system;
  Lambda lambda;
  std::int64_t N = 0;
  u128 exact = 0;
  std::optional<u128> projected;
  std::optional<u128> subset_sum_only;
  std::optional<u128> nontrivial;
  std::optional<u128> overlap;  // projected and subset-sum at once
  double seconds = 0.0;

  static std::string csv_header() { return "system,lambda,N,exact,projected,subset_sum,nontrivial,seconds"; }

  std::string csv_row() const {
    auto opt = [](const std::optional<u128>& v) { return v ? to_string(*v) : std::string("infeasible"); };
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << '"' << system << "\"," << '"' << describe_lambda(lambda) << "\"," << N << ',' << to_string(exact) << ','
       << opt(projected) << ',' << opt(subset_sum_only) << ',' << opt(nontrivial) << ',' << seconds;
    return os.str();
  }

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<u128>& v) -> nlohmann::json {
      return v ? nlohmann::json(to_string(*v)) : nlohmann::json(nullptr);
    };
    return {{"system", system},
            {"lambda", lambda},
            {"N", N},
            {"exact", to_string(exact)},
            {"projected", opt(projected)},
            {"subset_sum_only", opt(subset_sum_only)},
            {"nontrivial", opt(nontrivial)},
            {"overlap", opt(overlap)},
            {"seconds", seconds}};
  }
};

/// Exact count together with its trivial strata (when enumerable).
inline CountReport count_report(const PolySystem& P, const Lambda& lambda, std::int64_t N, const TableLimits& limits = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  CountReport rep;
  rep.system = P.name();
  rep.lambda = lambda;
  rep.N = N;
  rep.exact = count_solutions(P, lambda, N, limits);
  if (enumeration_feasible(lambda.size(), P.dimension(), N) && lambda.size() <= static_cast<std::size_t>(kMaxSubsetSumVariables)) {
    u128 proj = 0, sub_only = 0, nontriv = 0, both = 0, total = 0;
    enumerate_solutions(P, lambda, box_points(P.dimension(), N), [&](const SolutionTuple& t) {
      const auto c = classify_solution(P, lambda, t);
      ++total;
      if (c.projected) ++proj;
      if (c.projected && c.subset_sum) ++both;
      if (!c.projected && c.subset_sum) ++sub_only;
      if (c.tag == Triviality::Nontrivial) ++nontriv;
      return true;
    });
    if (total != rep.exact) throw InvariantViolation("count_report: enumeration disagrees with table count");
    rep.projected = proj;
    rep.subset_sum_only = sub_only;
    rep.nontrivial = nontriv;
    rep.overlap = both;
  } else if (P.dimension() == 1) {
    rep.projected = count_trivial(P, lambda, N, ProjectedKind{}, limits);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Symmetric lower bound

/// |A|^{2t} / V where V is the size of the box spanned by mu_1 P(A) + ... + mu_t P(A).
/// By Cauchy-Schwarz the count for lambda = (mu, -mu) in A is at least this.
inline Rational symmetric_lower_bound(const PolySystem& P, const Lambda& mu, const PointSet& A) {
  if (mu.empty()) throw std::invalid_argument("symmetric_lower_bound: mu must be nonempty");
  if (A.size() == 0) throw std::invalid_argument("symmetric_lower_bound: A must be nonempty");
  const std::size_t r = static_cast<std::size_t>(P.rank());
  std::vector<BigInt> vmin(r), vmax(r);
  bool first = true;
  for (const auto& p : A.points) {
    const auto v = evaluate_big(P, p);
    for (std::size_t j = 0; j < r; ++j) {
      if (first || v[j] < vmin[j]) vmin[j] = v[j];
      if (first || v[j] > vmax[j]) vmax[j] = v[j];
    }
    first = false;
  }
  BigInt V = 1;
  for (std::size_t j = 0; j < r; ++j) {
    BigInt lo = 0, hi = 0;
    for (auto m : mu) {
      const BigInt a = vmin[j] * m, b = vmax[j] * m;
      lo += std::min(a, b);
      hi += std::max(a, b);
    }
    V *= hi - lo + 1;
  }
  BigInt num = 1;
  for (std::size_t i = 0; i < 2 * mu.size(); ++i) num *= A.size();
  return Rational(num, V);
}

}  // namespace addeq
