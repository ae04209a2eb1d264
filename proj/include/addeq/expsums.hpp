#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "addeq/core/errors.hpp"
#include "addeq/core/kahan.hpp"
#include "addeq/core/numtheory.hpp"
#include "addeq/core/parallel.hpp"
#include "addeq/counting.hpp"
#include "addeq/systems.hpp"

namespace addeq {

/// Complex weights on [N]^d, stored in the row-major order of box_points.
class WeightFn {
 public:
  WeightFn() = default;
  WeightFn(int d, std::int64_t N, std::vector<cplx> values) : d_(d), N_(N), values_(std::move(values)) {
    std::int64_t total = 1;
    for (int i = 0; i < d; ++i) total *= N;
    if (static_cast<std::int64_t>(values_.size()) != total) throw std::invalid_argument("WeightFn: size must be N^d");
    refresh();
  }

  static WeightFn constant(int d, std::int64_t N, cplx c = 1.0) {
    std::int64_t total = 1;
    for (int i = 0; i < d; ++i) total *= N;
    return WeightFn(d, N, std::vector<cplx>(static_cast<std::size_t>(total), c));
  }

  static WeightFn indicator(const PointSet& A, std::int64_t N) {
    auto w = constant(A.d, N, 0.0);
    for (const auto& p : A.points) w.values_[w.index(p)] = 1.0;
    w.refresh();
    return w;
  }

  int dimension() const { return d_; }
  std::int64_t N() const { return N_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<cplx>& values() const { return values_; }
  const cplx& operator[](std::size_t i) const { return values_[i]; }
  double l2() const { return l2_; }
  double linf() const { return linf_; }

  std::size_t index(const Point& p) const {
    std::size_t idx = 0;
    for (int v = 0; v < d_; ++v) {
      const auto x = p[static_cast<std::size_t>(v)];
      if (x < 1 || x > N_) throw std::out_of_range("WeightFn: point outside [N]^d");
      idx = idx * static_cast<std::size_t>(N_) + static_cast<std::size_t>(x - 1);
    }
    return idx;
  }

  void set(std::size_t i, cplx v) {
    values_[i] = v;
    refresh();
  }

 private:
  void refresh() {
    CompensatedSum s;
    linf_ = 0.0;
    for (const auto& v : values_) {
      s.add(std::norm(v));
      linf_ = std::max(linf_, std::abs(v));
    }
    l2_ = std::sqrt(s.value());
  }

  int d_ = 1;
  std::int64_t N_ = 0;
  std::vector<cplx> values_;
  double l2_ = 0.0;
  double linf_ = 0.0;
};

/// Seeded random weight families used by tests and scans.
enum class WeightKind { Unweighted, RandomSign, RandomPhase, RandomComplex };

inline WeightFn random_weight(int d, std::int64_t N, WeightKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto w = WeightFn::constant(d, N, 1.0);
  std::vector<cplx> vals(w.size());
  for (auto& v : vals) {
    switch (kind) {
      case WeightKind::Unweighted: v = 1.0; break;
      case WeightKind::RandomSign: v = (rng() & 1) ? 1.0 : -1.0; break;
      case WeightKind::RandomPhase: v = e1(unif(rng)); break;
      case WeightKind::RandomComplex: v = cplx(2.0 * unif(rng) - 1.0, 2.0 * unif(rng) - 1.0); break;
    }
  }
  return WeightFn(d, N, std::move(vals));
}

/// Points of 𝕋^r with coordinates reduced to [0, 1).
inline std::vector<double> torus_reduce(std::vector<double> alpha) {
  for (auto& a : alpha) {
    a -= std::floor(a);
    if (a >= 1.0) a = 0.0;
  }
  return alpha;
}

struct TorusGrid {
  std::vector<std::int64_t> res;
  std::size_t size() const {
    std::size_t s = 1;
    for (auto m : res) s *= static_cast<std::size_t>(m);
    return s;
  }
};

namespace detail {

inline std::vector<std::vector<i128>> box_values(const PolySystem& P, std::int64_t N) {
  const auto pts = box_points(P.dimension(), N);
  std::vector<std::vector<i128>> out;
  out.reserve(pts.size());
  for (const auto& p : pts.points) out.push_back(evaluate(P, p));
  return out;
}

/// Evaluates S(t) = sum_n w(n) prod_j e(t_j r_j(n) / m_j) for every t in prod_j Z/m_j,
/// calling visit(flat_index, S(t)) in mixed-radix order (first coordinate slowest).
/// The leading coordinate is split across workers; visit must be thread-safe per index.
template <class Visit>
void separable_eval(const std::vector<cplx>& w, const std::vector<std::vector<std::int64_t>>& residues,
                    const std::vector<std::int64_t>& moduli, Visit&& visit) {
  const std::size_t r = moduli.size();
  const std::size_t n = w.size();
  std::vector<RootTable> roots;
  for (auto m : moduli) roots.emplace_back(m);
  std::vector<std::size_t> strides(r, 1);
  for (std::size_t j = r; j-- > 1;) strides[j - 1] = strides[j] * static_cast<std::size_t>(moduli[j]);
  const auto m0 = static_cast<std::size_t>(moduli[0]);
  parallel_chunks(m0, 1, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<std::vector<cplx>> buf(r, std::vector<cplx>(n));
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t j, std::size_t base) {
      const auto& prev = j == 0 ? w : buf[j - 1];
      const auto& res = residues[j];
      const auto& rt = roots[j];
      const std::int64_t m = moduli[j];
      const std::size_t lo = j == 0 ? b : 0, hi = j == 0 ? e : static_cast<std::size_t>(m);
      for (std::size_t t = lo; t < hi; ++t) {
        auto& cur = buf[j];
        if (j + 1 == r) {
          ComplexCompensatedSum sum;
          for (std::size_t p = 0; p < n; ++p)
            sum.add(prev[p] * rt[static_cast<std::int64_t>((static_cast<u128>(t) * static_cast<u128>(res[p])) % static_cast<u128>(m))]);
          visit(base + t * strides[j], sum.value());
        } else {
          for (std::size_t p = 0; p < n; ++p)
            cur[p] = prev[p] * rt[static_cast<std::int64_t>((static_cast<u128>(t) * static_cast<u128>(res[p])) % static_cast<u128>(m))];
          rec(j + 1, base + t * strides[j]);
        }
      }
    };
    rec(0, 0);
  });
}

}  // namespace detail

/// F_a(alpha) = sum_{n in [N]^d} a(n) e(alpha . P(n)) with compensated summation.
inline cplx weyl_sum(const PolySystem& P, const WeightFn& a, const std::vector<double>& alpha) {
  if (static_cast<int>(alpha.size()) != P.rank()) throw std::invalid_argument("weyl_sum: alpha must have r coordinates");
  if (a.dimension() != P.dimension()) throw std::invalid_argument("weyl_sum: weight dimension differs from system");
  const auto pts = box_points(P.dimension(), a.N());
  ComplexCompensatedSum sum;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (a[i] == cplx{}) continue;
    const auto v = evaluate(P, pts.points[i]);
    long double ph = 0.0L;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const long double t = static_cast<long double>(alpha[j]) * static_cast<long double>(v[j]);
      ph += t - std::floor(t);
    }
    sum.add(a[i] * e1(ph));
  }
  return sum.value();
}

/// G(alpha, theta) = sum_{x=1}^N e(alpha x^2 + theta x).
inline cplx parabola_G(double alpha, double theta, std::int64_t N) {
  ComplexCompensatedSum sum;
  for (std::int64_t x = 1; x <= N; ++x) {
    const long double xl = static_cast<long double>(x);
    const long double a = static_cast<long double>(alpha) * xl * xl, b = static_cast<long double>(theta) * xl;
    sum.add(e1((a - std::floor(a)) + (b - std::floor(b))));
  }
  return sum.value();
}

/// Parabola sum F(alpha, theta) as the product of one-dimensional sums.
inline cplx parabola_weyl_split(double alpha, const std::vector<double>& theta, std::int64_t N) {
  cplx prod = 1.0;
  for (double t : theta) prod *= parabola_G(alpha, t, N);
  return prod;
}

// ---------------------------------------------------------------------------
// Discrete modulus

struct DiscreteModulus {
  std::int64_t M = 0;
  std::int64_t N = 0;
  std::vector<int> degrees;
  std::vector<std::int64_t> moduli;  // M^{k_j}
  double D = 0.0;                    // M / N

  std::size_t group_size() const {
    std::size_t s = 1;
    for (auto m : moduli) s *= static_cast<std::size_t>(m);
    return s;
  }
  int weight() const { return std::accumulate(degrees.begin(), degrees.end(), 0); }

  /// Mixed-radix coordinates of a flat index (first coordinate slowest).
  std::vector<std::int64_t> unflatten(std::size_t idx) const {
    std::vector<std::int64_t> xi(moduli.size());
    for (std::size_t j = moduli.size(); j-- > 0;) {
      xi[j] = static_cast<std::int64_t>(idx % static_cast<std::size_t>(moduli[j]));
      idx /= static_cast<std::size_t>(moduli[j]);
    }
    return xi;
  }
  std::size_t flatten(const std::vector<std::int64_t>& xi) const {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < moduli.size(); ++j)
      idx = idx * static_cast<std::size_t>(moduli[j]) + static_cast<std::size_t>(mod_floor(xi[j], moduli[j]));
    return idx;
  }

  nlohmann::json to_json() const { return {{"M", M}, {"N", N}, {"degrees", degrees}, {"moduli", moduli}, {"D", D}}; }
};

/// Smallest prime M, coprime to every lambda_i, with M^{k_j} > sum|lambda_i| * mass(P_j) * N^{k_j}
/// for all j, so congruences modulo M^{k_j} coincide with equalities over [N]^d.
inline DiscreteModulus choose_modulus(const PolySystem& P, const Lambda& lambda, std::int64_t N) {
  for (auto l : lambda)
    if (l == 0) throw std::invalid_argument("choose_modulus: lambda entries must be nonzero");
  std::int64_t lam = 0;
  for (auto l : lambda) lam += l < 0 ? -l : l;
  auto ok = [&](std::int64_t M) {
    for (auto l : lambda)
      if (std::gcd(M, l < 0 ? -l : l) != 1) return false;
    for (int j = 0; j < P.rank(); ++j) {
      const int k = P.degrees()[static_cast<std::size_t>(j)];
      const BigInt lhs = boost::multiprecision::pow(BigInt(M), static_cast<unsigned>(k));
      const BigInt rhs = BigInt(lam) * P.coefficient_mass(j) * boost::multiprecision::pow(BigInt(N), static_cast<unsigned>(k));
      if (lhs <= rhs) return false;
    }
    return true;
  };
  // Analytic lower bound: M > lam * mass_j^{1/k_j} * N for every j.
  double lb = 2.0;
  for (int j = 0; j < P.rank(); ++j) {
    const double k = P.degrees()[static_cast<std::size_t>(j)];
    lb = std::max(lb, std::floor(static_cast<double>(N) * std::pow(static_cast<double>(lam) * P.coefficient_mass(j), 1.0 / k)) - 2.0);
  }
  std::int64_t M = next_prime(static_cast<std::int64_t>(lb));
  while (!ok(M)) M = next_prime(M + 1);
  DiscreteModulus mod;
  mod.M = M;
  mod.N = N;
  mod.degrees = P.degrees();
  for (int k : mod.degrees) {
    std::int64_t mk = 1;
    for (int i = 0; i < k; ++i) mk *= M;
    mod.moduli.push_back(mk);
  }
  mod.D = static_cast<double>(M) / static_cast<double>(N);
  return mod;
}

/// H_f(xi) = E_{n in [N]^d} f(n) e(sum_j xi_j P_j(n) / M^{k_j}).
inline cplx h_sum(const PolySystem& P, const WeightFn& f, const std::vector<std::int64_t>& xi, const DiscreteModulus& mod) {
  const auto pts = box_points(P.dimension(), f.N());
  ComplexCompensatedSum sum;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (f[i] == cplx{}) continue;
    const auto v = evaluate(P, pts.points[i]);
    long double ph = 0.0L;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const i128 m = mod.moduli[j];
      i128 res = (static_cast<i128>(mod_floor(xi[j], mod.moduli[j])) * (v[j] % m)) % m;
      if (res < 0) res += m;
      ph += static_cast<long double>(res) / static_cast<long double>(m);
    }
    sum.add(f[i] * e1(ph));
  }
  return sum.value() / static_cast<double>(pts.size());
}

inline constexpr std::size_t kSpectralTableCap = std::size_t{1} << 24;

/// H_f over the whole group Z_{M^{k_1}} x ... x Z_{M^{k_r}} (flat, first coordinate slowest).
inline std::vector<cplx> h_table(const PolySystem& P, const WeightFn& f, const DiscreteModulus& mod,
                                 std::size_t cap = kSpectralTableCap) {
  if (mod.group_size() > cap)
    throw GuardError("spectral.table", "|Z_M| = " + std::to_string(mod.group_size()) + " exceeds cap " + std::to_string(cap));
  const auto vals = detail::box_values(P, f.N());
  std::vector<std::vector<std::int64_t>> residues(mod.moduli.size(), std::vector<std::int64_t>(vals.size()));
  for (std::size_t j = 0; j < mod.moduli.size(); ++j)
    for (std::size_t p = 0; p < vals.size(); ++p) {
      i128 r = vals[p][j] % mod.moduli[j];
      if (r < 0) r += mod.moduli[j];
      residues[j][p] = static_cast<std::int64_t>(r);
    }
  std::vector<cplx> out(mod.group_size());
  const double scale = 1.0 / static_cast<double>(vals.size());
  detail::separable_eval(f.values(), residues, mod.moduli, [&](std::size_t idx, cplx v) { out[idx] = v * scale; });
  return out;
}

// ---------------------------------------------------------------------------
// Operator T

enum class TMode { Direct, Spectral };

struct TResult {
  cplx value;
  DiscreteModulus mod;
  TMode mode = TMode::Direct;
};

/// T(f_1..f_s) = D^K N^{-(ds-K)} sum over solutions of prod f_i(n_i).
inline TResult t_operator(const PolySystem& P, const Lambda& lambda, const std::vector<WeightFn>& fs, std::int64_t N,
                          TMode mode, const TableLimits& limits = {}, std::size_t spectral_cap = kSpectralTableCap) {
  if (fs.size() != lambda.size()) throw std::invalid_argument("t_operator: one weight per variable");
  if (std::accumulate(lambda.begin(), lambda.end(), std::int64_t{0}) != 0)
    throw std::invalid_argument("t_operator: lambda must sum to zero");
  for (const auto& f : fs)
    if (f.N() != N || f.dimension() != P.dimension()) throw std::invalid_argument("t_operator: weights must live on [N]^d");
  const auto mod = choose_modulus(P, lambda, N);
  const int K = P.weight();
  const int d = P.dimension();
  const auto s = static_cast<int>(lambda.size());
  TResult res{0.0, mod, mode};
  if (mode == TMode::Direct) {
    const auto pts = box_points(d, N);
    const std::size_t m1 = split_point(lambda.size());
    std::vector<std::vector<cplx>> w1, w2;
    for (std::size_t i = 0; i < lambda.size(); ++i) (i < m1 ? w1 : w2).push_back(fs[i].values());
    const Lambda l1(lambda.begin(), lambda.begin() + static_cast<std::ptrdiff_t>(m1));
    Lambda l2(lambda.begin() + static_cast<std::ptrdiff_t>(m1), lambda.end());
    for (auto& l : l2) l = -l;
    const auto T1 = rep_table<cplx>(P, l1, pts, &w1, limits);
    const auto T2 = rep_table<cplx>(P, l2, pts, &w2, limits);
    ComplexCompensatedSum acc;
    const bool a_small = T1.nonzero() <= T2.nonzero();
    const auto& S = a_small ? T1 : T2;
    const auto& L = a_small ? T2 : T1;
    S.for_each([&](const std::vector<i128>& k, const cplx& w) { acc.add(w * L.at(k)); });
    const double scale = std::pow(mod.D, K) * std::pow(static_cast<double>(N), -(static_cast<double>(d) * s - K));
    res.value = acc.value() * scale;
    return res;
  }
  std::vector<std::vector<cplx>> H;
  for (const auto& f : fs) H.push_back(h_table(P, f, mod, spectral_cap));
  const std::size_t G = mod.group_size();
  const std::size_t r = mod.moduli.size();
  constexpr std::size_t chunk = 4096;
  std::vector<cplx> partial(chunk_count(G, chunk));
  parallel_chunks(G, chunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    ComplexCompensatedSum acc;
    std::vector<std::int64_t> xi = mod.unflatten(b);
    for (std::size_t idx = b; idx < e; ++idx) {
      cplx prod = 1.0;
      for (std::size_t i = 0; i < H.size(); ++i) {
        std::size_t k = 0;
        for (std::size_t j = 0; j < r; ++j) {
          const std::int64_t m = mod.moduli[j];
          k = k * static_cast<std::size_t>(m) +
              static_cast<std::size_t>(mod_floor(static_cast<std::int64_t>((static_cast<i128>(lambda[i]) * xi[j]) % m), m));
        }
        prod *= H[i][k];
      }
      acc.add(prod);
      for (std::size_t j = r; j-- > 0;) {
        if (++xi[j] < mod.moduli[j]) break;
        xi[j] = 0;
      }
    }
    partial[c] = acc.value();
  });
  ComplexCompensatedSum total;
  for (const auto& p : partial) total.add(p);
  res.value = total.value();
  return res;
}

// ---------------------------------------------------------------------------
// Grid moments

struct GridMoment {
  double value = 0.0;
  bool exact = false;
  std::string warning;
};

/// Smallest per-coordinate resolution making the p-th moment exact for even p.
inline std::vector<std::int64_t> exact_resolution(const PolySystem& P, std::int64_t N, int p) {
  const auto vals = detail::box_values(P, N);
  std::vector<std::int64_t> res;
  for (int j = 0; j < P.rank(); ++j) {
    i128 lo = vals[0][static_cast<std::size_t>(j)], hi = lo;
    for (const auto& v : vals) {
      lo = std::min(lo, v[static_cast<std::size_t>(j)]);
      hi = std::max(hi, v[static_cast<std::size_t>(j)]);
    }
    res.push_back(static_cast<std::int64_t>(p * (hi - lo) + 1));
  }
  return res;
}

/// Riemann sum of |F_a|^p over the grid. Exact for even p when res_j > p * span_j.
inline GridMoment grid_moment(const PolySystem& P, const WeightFn& a, double p, const TorusGrid& grid) {
  if (static_cast<int>(grid.res.size()) != P.rank()) throw std::invalid_argument("grid_moment: grid needs r resolutions");
  if (!(p > 0)) throw std::invalid_argument("grid_moment: p must be positive");
  const auto vals = detail::box_values(P, a.N());
  std::vector<std::vector<std::int64_t>> residues(grid.res.size(), std::vector<std::int64_t>(vals.size()));
  GridMoment out;
  const bool even = std::floor(p) == p && static_cast<long>(p) % 2 == 0;
  out.exact = even;
  for (std::size_t j = 0; j < grid.res.size(); ++j) {
    i128 lo = vals[0][j], hi = lo;
    for (std::size_t q = 0; q < vals.size(); ++q) {
      i128 r = vals[q][j] % grid.res[j];
      if (r < 0) r += grid.res[j];
      residues[j][q] = static_cast<std::int64_t>(r);
      lo = std::min(lo, vals[q][j]);
      hi = std::max(hi, vals[q][j]);
    }
    if (!(static_cast<i128>(grid.res[j]) > static_cast<i128>(p) * (hi - lo))) out.exact = false;
  }
  if (!out.exact) out.warning = "grid resolution below the exactness threshold; value is a Riemann approximation";
  const std::size_t G = grid.size();
  constexpr std::size_t chunk = 1024;
  std::vector<double> vals_abs(G);
  detail::separable_eval(a.values(), residues, grid.res, [&](std::size_t idx, cplx v) { vals_abs[idx] = std::abs(v); });
  std::vector<double> partial(chunk_count(G, chunk));
  parallel_chunks(G, chunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    CompensatedSum s;
    for (std::size_t i = b; i < e; ++i) s.add(std::pow(vals_abs[i], p));
    partial[c] = s.value();
  });
  CompensatedSum total;
  for (double v : partial) total.add(v);
  out.value = total.value() / static_cast<double>(G);
  return out;
}

/// Exact weighted even moment sum_v |R_a(v)|^2 with R_a the weighted representation function
/// of s copies; equals the integral of |F_a|^{2s}.
inline double weighted_even_moment(const PolySystem& P, const WeightFn& a, int s, const TableLimits& limits = {}) {
  const auto pts = box_points(P.dimension(), a.N());
  std::vector<std::vector<cplx>> w(static_cast<std::size_t>(s), a.values());
  const auto T = rep_table<cplx>(P, Lambda(static_cast<std::size_t>(s), 1), pts, &w, limits);
  CompensatedSum sum;
  T.for_each([&](const std::vector<i128>&, const cplx& v) { sum.add(std::norm(v)); });
  return sum.value();
}

}  // namespace addeq
