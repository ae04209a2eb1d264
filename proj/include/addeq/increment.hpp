#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "addeq/core/errors.hpp"
#include "addeq/core/int128.hpp"
#include "addeq/core/kahan.hpp"
#include "addeq/core/numtheory.hpp"
#include "addeq/counting.hpp"
#include "addeq/expsums.hpp"
#include "addeq/systems.hpp"

namespace addeq {

// ---------------------------------------------------------------------------
// Point sets

/// Seeded random subset of [N]^d keeping each point with probability `density`.
inline PointSet random_set(int d, std::int64_t N, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto box = box_points(d, N);
  std::vector<Point> pts;
  for (const auto& p : box.points)
    if (unif(rng) < density) pts.push_back(p);
  return explicit_points(d, std::move(pts));
}

/// Newline-delimited points, one per line with d whitespace-separated integers; '#' starts a comment.
inline PointSet read_point_set(std::istream& in, int d) {
  std::vector<Point> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    Point p;
    std::int64_t x;
    while (ls >> x) p.push_back(x);
    if (p.empty()) continue;
    if (static_cast<int>(p.size()) != d)
      throw std::invalid_argument("read_point_set: line " + std::to_string(lineno) + " has " + std::to_string(p.size()) +
                                  " coordinates, expected " + std::to_string(d));
    pts.push_back(std::move(p));
  }
  return explicit_points(d, std::move(pts));
}

inline bool inside_box(const Point& p, std::int64_t N) {
  for (auto x : p)
    if (x < 1 || x > N) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Balanced functions

/// f_A = 1_A - delta 1_{[N]^d} with delta = |A| / N^d.
struct BalancedFn {
  WeightFn f;
  Rational delta;
  std::int64_t numerator_one = 0;   // N^d - |A|, so f = numerator / N^d on A
  std::int64_t numerator_zero = 0;  // -|A|, off A
  std::int64_t denominator = 1;     // N^d

  Rational exact(std::size_t i) const {
    return f[i].real() > 0 ? Rational(numerator_one, denominator) : Rational(numerator_zero, denominator);
  }
};

inline BalancedFn balanced_fn(const PointSet& A, std::int64_t N) {
  if (A.size() == 0) throw std::invalid_argument("balanced_fn: A is empty");
  auto ind = WeightFn::indicator(A, N);
  const auto total = static_cast<std::int64_t>(ind.size());
  const auto a = static_cast<std::int64_t>(A.size());
  BalancedFn b;
  b.delta = Rational(a, total);
  b.numerator_one = total - a;
  b.numerator_zero = -a;
  b.denominator = total;
  const double one = static_cast<double>(total - a) / static_cast<double>(total);
  const double zero = -static_cast<double>(a) / static_cast<double>(total);
  std::vector<cplx> vals(ind.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = ind[i].real() > 0 ? one : zero;
  b.f = WeightFn(A.d, N, std::move(vals));
  return b;
}

// ---------------------------------------------------------------------------
// Large spectrum

struct SpectrumParams {
  double s_prime = 2.0;
  double kappa = 0.05;  // prefix threshold kappa * R^{c1}
  double c1 = 0.5;
  int R_max = 4;
  std::size_t cap = kSpectralTableCap;

  nlohmann::json to_json() const {
    return {{"s_prime", s_prime}, {"kappa", kappa}, {"c1", c1}, {"R_max", R_max}};
  }
};

struct Spectrum {
  std::vector<std::vector<std::int64_t>> freqs;
  std::vector<cplx> values;
  double mass = 0.0;  // sum_{i <= R} |H(xi_i)|^{s'}
  bool met = false;

  nlohmann::json to_json() const {
    nlohmann::json mags = nlohmann::json::array();
    for (const auto& v : values) mags.push_back(std::abs(v));
    return {{"R", freqs.size()}, {"freqs", freqs}, {"abs_H", mags}, {"mass", mass}, {"met", met}};
  }
};

/// Frequencies of Z_M sorted by decreasing |H_f| (ties by index); the shortest prefix with
/// sum |H_f|^{s'} >= kappa R^{c1} and R <= R_max, or empty if there is none.
inline Spectrum large_spectrum(const PolySystem& P, const WeightFn& f, const DiscreteModulus& mod, const SpectrumParams& params = {}) {
  const auto H = h_table(P, f, mod, params.cap);
  std::vector<std::size_t> order(H.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t top = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(params.R_max, 0)));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(), [&](std::size_t a, std::size_t b) {
    const double x = std::abs(H[a]), y = std::abs(H[b]);
    return x != y ? x > y : a < b;
  });
  Spectrum sp;
  CompensatedSum mass;
  for (std::size_t R = 1; R <= top; ++R) {
    mass.add(std::pow(std::abs(H[order[R - 1]]), params.s_prime));
    if (mass.value() >= params.kappa * std::pow(static_cast<double>(R), params.c1)) {
      for (std::size_t i = 0; i < R; ++i) {
        sp.freqs.push_back(mod.unflatten(order[i]));
        sp.values.push_back(H[order[i]]);
      }
      sp.mass = mass.value();
      sp.met = true;
      return sp;
    }
  }
  return sp;
}

// ---------------------------------------------------------------------------
// Simultaneous Diophantine approximation

struct DiophantineResult {
  std::int64_t q = 1;
  double achieved = 0.0;  // max_i ||q^k theta_i||
  double bound = 0.0;     // L^{-c T^{-2}}
  bool bound_met = false;

  nlohmann::json to_json() const { return {{"q", q}, {"achieved", achieved}, {"bound", bound}, {"bound_met", bound_met}}; }
};

namespace detail {

// frac(x) as a 128-bit binary fraction; exact for doubles with |x| < 2^52 and frac(x) >= 2^-75.
inline u128 fixed_fraction(double x) {
  double f = x - std::floor(x);
  if (f >= 1.0) f = 0.0;
  if (f == 0.0) return 0;
  int e = 0;
  const double m = std::frexp(f, &e);  // f = m 2^e, m in [1/2, 1)
  const auto mant = static_cast<std::uint64_t>(std::ldexp(m, 53));
  const int shift = e - 53 + 128;
  if (shift >= 0) return static_cast<u128>(mant) << shift;
  if (shift <= -64) return 0;
  return static_cast<u128>(mant >> (-shift));
}

inline u128 torus_dist_fixed(u128 v) { return std::min<u128>(v, static_cast<u128>(0) - v); }

inline double fixed_to_double(u128 v) { return static_cast<double>(std::ldexp(static_cast<long double>(v), -128)); }

inline u128 wrap_pow(std::int64_t q, int k) {
  u128 r = 1;
  for (int i = 0; i < k; ++i) r *= static_cast<u128>(q);
  return r;
}

}  // namespace detail

/// Exhaustive search over q = 1..L for the q minimizing max_i ||q^k theta_i|| (smallest q on ties).
/// Arithmetic is exact on the binary expansions of the inputs.
inline DiophantineResult simultaneous_approx(const std::vector<double>& thetas, int k, std::int64_t L, double c = 0.5) {
  if (L < 1) throw std::invalid_argument("simultaneous_approx: L must be >= 1");
  if (k < 1) throw std::invalid_argument("simultaneous_approx: k must be >= 1");
  std::vector<u128> fx;
  for (double t : thetas) fx.push_back(detail::fixed_fraction(t));
  u128 best = 0;
  std::int64_t best_q = 0;
  for (std::int64_t q = 1; q <= L; ++q) {
    const u128 qk = detail::wrap_pow(q, k);
    u128 worst = 0;
    for (auto t : fx) worst = std::max(worst, detail::torus_dist_fixed(qk * t));
    if (best_q == 0 || worst < best) {
      best = worst;
      best_q = q;
      if (best == 0) break;
    }
  }
  DiophantineResult r;
  r.q = best_q;
  r.achieved = detail::fixed_to_double(best);
  const double T = std::max<double>(1.0, static_cast<double>(thetas.size()));
  r.bound = std::pow(static_cast<double>(L), -c / (T * T));
  r.bound_met = r.achieved <= r.bound;
  return r;
}

/// A rational angle num / den with 1 <= den < 2^62.
struct RationalAngle {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

/// Exact version for rational angles.
inline DiophantineResult simultaneous_approx(const std::vector<RationalAngle>& thetas, int k, std::int64_t L, double c = 0.5) {
  if (L < 1) throw std::invalid_argument("simultaneous_approx: L must be >= 1");
  if (k < 1) throw std::invalid_argument("simultaneous_approx: k must be >= 1");
  for (const auto& t : thetas)
    if (t.den < 1 || t.den >= (std::int64_t{1} << 62)) throw std::invalid_argument("simultaneous_approx: bad denominator");
  // Current worst as a fraction a / b.
  auto worst_of = [&](std::int64_t q) {
    u128 a = 0, b = 1;
    for (const auto& t : thetas) {
      const auto den = static_cast<u128>(t.den);
      u128 qk = 1;
      for (int i = 0; i < k; ++i) qk = (qk * static_cast<u128>(q)) % den;
      const u128 r = (qk * static_cast<u128>(mod_floor(t.num, t.den))) % den;
      const u128 dist = std::min(r, den - r);
      if (dist * b > a * den) {
        a = dist;
        b = den;
      }
    }
    return std::pair<u128, u128>{a, b};
  };
  std::pair<u128, u128> best{0, 1};
  std::int64_t best_q = 0;
  for (std::int64_t q = 1; q <= L; ++q) {
    const auto w = worst_of(q);
    if (best_q == 0 || w.first * best.second < best.first * w.second) {
      best = w;
      best_q = q;
      if (best.first == 0) break;
    }
  }
  DiophantineResult r;
  r.q = best_q;
  r.achieved = static_cast<double>(static_cast<long double>(best.first) / static_cast<long double>(best.second));
  const double T = std::max<double>(1.0, static_cast<double>(thetas.size()));
  r.bound = std::pow(static_cast<double>(L), -c / (T * T));
  r.bound_met = r.achieved <= r.bound;
  return r;
}

// ---------------------------------------------------------------------------
// Polynomial phases

/// phi(x) = sum_alpha num_alpha x^alpha / den mod 1, with den < 2^62 and no constant term.
struct PhaseFunction {
  struct Term {
    std::vector<int> exps;
    std::int64_t num = 0;
  };
  int d = 1;
  std::int64_t den = 1;
  std::vector<Term> terms;

  int degree() const {
    int k = 0;
    for (const auto& t : terms)
      if (mod_floor(t.num, den) != 0) k = std::max(k, std::accumulate(t.exps.begin(), t.exps.end(), 0));
    return k;
  }

  /// phi(x) * den mod den.
  std::int64_t eval_num(const Point& x) const {
    const auto D = static_cast<u128>(den);
    u128 acc = 0;
    for (const auto& t : terms) {
      u128 v = static_cast<u128>(mod_floor(t.num, den));
      for (int i = 0; i < d; ++i) {
        const auto xr = static_cast<u128>(mod_floor(x[static_cast<std::size_t>(i)], den));
        for (int e = 0; e < t.exps[static_cast<std::size_t>(i)]; ++e) v = (v * xr) % D;
      }
      acc = (acc + v) % D;
    }
    return static_cast<std::int64_t>(acc);
  }

  double eval(const Point& x) const { return static_cast<double>(static_cast<long double>(eval_num(x)) / static_cast<long double>(den)); }

  void validate() const {
    if (den < 1 || den >= (std::int64_t{1} << 62)) throw std::invalid_argument("PhaseFunction: bad denominator");
    for (const auto& t : terms) {
      if (static_cast<int>(t.exps.size()) != d) throw std::invalid_argument("PhaseFunction: exponent length");
      if (std::accumulate(t.exps.begin(), t.exps.end(), 0) == 0 && mod_floor(t.num, den) != 0)
        throw std::invalid_argument("PhaseFunction: constant term must vanish");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : terms) ts.push_back({{"exps", t.exps}, {"num", t.num}});
    return {{"d", d}, {"den", den}, {"terms", ts}};
  }
};

/// phi(n) = sum_j xi_j P_j(n) / M^{k_j}, over the common denominator M^{max k_j}.
inline PhaseFunction phase_from_frequency(const PolySystem& P, const DiscreteModulus& mod, const std::vector<std::int64_t>& xi) {
  PhaseFunction ph;
  ph.d = P.dimension();
  const int kmax = P.degree();
  BigInt den = boost::multiprecision::pow(BigInt(mod.M), static_cast<unsigned>(kmax));
  if (den >= (BigInt(1) << 62)) throw GuardError("phase.denominator", "M^k exceeds 2^62");
  ph.den = static_cast<std::int64_t>(den);
  std::map<std::vector<int>, BigInt> acc;
  for (int j = 0; j < P.rank(); ++j) {
    const BigInt scale = boost::multiprecision::pow(BigInt(mod.M), static_cast<unsigned>(kmax - P.degrees()[static_cast<std::size_t>(j)]));
    for (const auto& m : P.polys()[static_cast<std::size_t>(j)]) acc[m.exps] += BigInt(xi[static_cast<std::size_t>(j)]) * m.coef * scale;
  }
  for (auto& [exps, v] : acc) {
    BigInt r = v % den;
    if (r < 0) r += den;
    if (r != 0) ph.terms.push_back({exps, static_cast<std::int64_t>(r)});
  }
  return ph;
}

// ---------------------------------------------------------------------------
// Cube progressions and factors

/// u + q [L]^d with [L] = {1, ..., L}.
struct CubeProgression {
  Point u;
  std::int64_t q = 1;
  std::int64_t L = 1;

  int dimension() const { return static_cast<int>(u.size()); }
  std::int64_t size() const {
    std::int64_t s = 1;
    for (std::size_t i = 0; i < u.size(); ++i) s *= L;
    return s;
  }
  Point first() const {
    Point p = u;
    for (auto& x : p) x += q;
    return p;
  }
  bool contains(const Point& x) const {
    for (std::size_t i = 0; i < u.size(); ++i) {
      const auto t = x[i] - u[i];
      if (t % q != 0) return false;
      const auto j = t / q;
      if (j < 1 || j > L) return false;
    }
    return true;
  }
  /// Calls fn(point) for every point, last coordinate fastest.
  template <class Fn>
  void for_each(Fn&& fn) const {
    const auto d = u.size();
    std::vector<std::int64_t> y(d, 1);
    Point p(d);
    const auto total = size();
    for (std::int64_t t = 0; t < total; ++t) {
      for (std::size_t i = 0; i < d; ++i) p[i] = u[i] + q * y[i];
      fn(static_cast<const Point&>(p));
      for (std::size_t i = d; i-- > 0;) {
        if (++y[i] <= L) break;
        y[i] = 1;
      }
    }
  }
  nlohmann::json to_json() const { return {{"u", u}, {"q", q}, {"L", L}}; }
};

/// Index of a point of [N]^d in box order.
inline std::size_t box_index(const Point& p, std::int64_t N) {
  std::size_t idx = 0;
  for (auto x : p) idx = idx * static_cast<std::size_t>(N) + static_cast<std::size_t>(x - 1);
  return idx;
}

/// A partition of [N]^d into cube progressions and an exceptional set Xi.
struct Factor {
  int d = 1;
  std::int64_t N = 1;
  std::vector<CubeProgression> atoms;
  std::vector<Point> xi;

  std::size_t box_size() const {
    std::size_t s = 1;
    for (int i = 0; i < d; ++i) s *= static_cast<std::size_t>(N);
    return s;
  }

  /// Atom index per point of [N]^d in box order, -1 on Xi. Throws if the pieces overlap,
  /// leave the box or fail to cover it.
  std::vector<int> labels() const {
    std::vector<int> lab(box_size(), -2);
    auto mark = [&](const Point& p, int v) {
      if (static_cast<int>(p.size()) != d || !inside_box(p, N)) throw std::invalid_argument("Factor: piece leaves [N]^d");
      auto& slot = lab[box_index(p, N)];
      if (slot != -2) throw std::invalid_argument("Factor: pieces overlap");
      slot = v;
    };
    for (std::size_t i = 0; i < atoms.size(); ++i) atoms[i].for_each([&](const Point& p) { mark(p, static_cast<int>(i)); });
    for (const auto& p : xi) mark(p, -1);
    for (int v : lab)
      if (v == -2) throw std::invalid_argument("Factor: pieces do not cover [N]^d");
    return lab;
  }

  /// Bitset check that atoms and Xi partition [N]^d exactly.
  bool verify_partition() const {
    std::vector<bool> seen(box_size(), false);
    std::size_t count = 0;
    auto mark = [&](const Point& p) {
      if (static_cast<int>(p.size()) != d || !inside_box(p, N)) return false;
      const auto i = box_index(p, N);
      if (seen[i]) return false;
      seen[i] = true;
      ++count;
      return true;
    };
    bool ok = true;
    for (const auto& a : atoms) {
      if (a.L < 1 || a.q < 1) return false;
      a.for_each([&](const Point& p) { ok = ok && mark(p); });
    }
    for (const auto& p : xi) ok = ok && mark(p);
    return ok && count == box_size();
  }

  static Factor trivial(int d, std::int64_t N) {
    Factor f;
    f.d = d;
    f.N = N;
    f.atoms.push_back({Point(static_cast<std::size_t>(d), 0), 1, N});
    return f;
  }
  static Factor full(int d, std::int64_t N) {
    Factor f;
    f.d = d;
    f.N = N;
    for (const auto& p : box_points(d, N).points) {
      Point u = p;
      for (auto& x : u) x -= 1;
      f.atoms.push_back({u, 1, 1});
    }
    return f;
  }

  nlohmann::json summary() const {
    std::int64_t smallest = std::numeric_limits<std::int64_t>::max(), largest = 0;
    for (const auto& a : atoms) {
      smallest = std::min(smallest, a.size());
      largest = std::max(largest, a.size());
    }
    return {{"atoms", atoms.size()},
            {"xi", xi.size()},
            {"smallest_atom", atoms.empty() ? 0 : smallest},
            {"largest_atom", largest}};
  }
};

// ---------------------------------------------------------------------------
// Linearization

struct LinearizeParams {
  double target = -1.0;       // diameter target; negative means N^{-target_exponent}
  double target_exponent = 0.1;
  std::int64_t L_min = 1;     // cells below this side with a large diameter go to Xi
  double xi_max = 0.5;        // largest admissible |Xi| / N^d
  std::size_t max_points = std::size_t{1} << 24;

  double resolved_target(std::int64_t N) const {
    return target >= 0 ? target : std::pow(static_cast<double>(N), -target_exponent);
  }
  nlohmann::json to_json() const {
    return {{"target", target}, {"target_exponent", target_exponent}, {"L_min", L_min}, {"xi_max", xi_max}};
  }
};

class LinearizeInfeasible : public GuardError {
 public:
  LinearizeInfeasible(std::string detail, double xi_fraction, double worst_diameter)
      : GuardError("linearize.feasibility", std::move(detail)), xi_fraction_(xi_fraction), worst_(worst_diameter) {}
  double xi_fraction() const { return xi_fraction_; }
  double worst_diameter() const { return worst_; }

 private:
  double xi_fraction_;
  double worst_;
};

/// max over x, y of ||(v_x - v_y) / den|| for residues v modulo den.
inline double circular_diameter(std::vector<std::int64_t> v, std::int64_t den) {
  if (v.size() < 2) return 0.0;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::int64_t best = 0;
  auto dist = [&](std::int64_t a, std::int64_t b) {
    const std::int64_t t = a > b ? a - b : b - a;
    return std::min(t, den - t);
  };
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t anti = static_cast<std::int64_t>((static_cast<u128>(v[i]) + static_cast<u128>(den / 2)) % static_cast<u128>(den));
    const auto it = std::lower_bound(v.begin(), v.end(), anti);
    const std::size_t j = static_cast<std::size_t>(it - v.begin());
    for (std::size_t c : {j % n, (j + n - 1) % n, (j + 1) % n}) best = std::max(best, dist(v[i], v[c]));
  }
  return static_cast<double>(static_cast<long double>(best) / static_cast<long double>(den));
}

/// Largest diameter of the phases over a cube progression.
inline double cube_diameter(const std::vector<PhaseFunction>& phases, const CubeProgression& Q) {
  double worst = 0.0;
  for (const auto& ph : phases) {
    std::vector<std::int64_t> vals;
    vals.reserve(static_cast<std::size_t>(Q.size()));
    Q.for_each([&](const Point& p) { vals.push_back(ph.eval_num(p)); });
    worst = std::max(worst, circular_diameter(std::move(vals), ph.den));
  }
  return worst;
}

namespace detail {

inline u128 binom_mod(int n, int k, u128 m) {
  // Small n: Pascal row.
  std::vector<u128> row(static_cast<std::size_t>(n) + 1, 0);
  row[0] = 1 % m;
  for (int i = 1; i <= n; ++i)
    for (int j = i; j >= 1; --j) row[static_cast<std::size_t>(j)] = (row[static_cast<std::size_t>(j)] + row[static_cast<std::size_t>(j - 1)]) % m;
  return row[static_cast<std::size_t>(k)];
}

inline u128 pow_mod(u128 b, int e, u128 m) {
  u128 r = 1 % m;
  for (int i = 0; i < e; ++i) r = (r * b) % m;
  return r;
}

// Coefficients of y -> phi(p0 + q y) modulo den, keyed by exponent vector (constant term dropped).
inline std::map<std::vector<int>, std::int64_t> restrict_phase(const PhaseFunction& ph, const Point& p0, std::int64_t q) {
  const auto D = static_cast<u128>(ph.den);
  std::map<std::vector<int>, u128> acc;
  for (const auto& t : ph.terms) {
    // prod_i (p0_i + q y_i)^{a_i} = prod_i sum_{b_i} C(a_i, b_i) p0_i^{a_i - b_i} q^{b_i} y_i^{b_i}
    std::vector<std::vector<u128>> factor(static_cast<std::size_t>(ph.d));
    for (int i = 0; i < ph.d; ++i) {
      const int a = t.exps[static_cast<std::size_t>(i)];
      const auto pi = static_cast<u128>(mod_floor(p0[static_cast<std::size_t>(i)], ph.den));
      const auto qq = static_cast<u128>(mod_floor(q, ph.den));
      for (int b = 0; b <= a; ++b)
        factor[static_cast<std::size_t>(i)].push_back(binom_mod(a, b, D) * pow_mod(pi, a - b, D) % D * pow_mod(qq, b, D) % D);
    }
    std::vector<int> b(static_cast<std::size_t>(ph.d), 0);
    const auto base = static_cast<u128>(mod_floor(t.num, ph.den));
    while (true) {
      u128 v = base;
      for (int i = 0; i < ph.d; ++i) v = v * factor[static_cast<std::size_t>(i)][static_cast<std::size_t>(b[static_cast<std::size_t>(i)])] % D;
      if (std::accumulate(b.begin(), b.end(), 0) > 0) {
        auto& slot = acc[b];
        slot = (slot + v) % D;
      }
      int i = ph.d - 1;
      for (; i >= 0; --i) {
        if (++b[static_cast<std::size_t>(i)] <= t.exps[static_cast<std::size_t>(i)]) break;
        b[static_cast<std::size_t>(i)] = 0;
      }
      if (i < 0) break;
    }
  }
  std::map<std::vector<int>, std::int64_t> out;
  for (const auto& [e, v] : acc)
    if (v != 0) out[e] = static_cast<std::int64_t>(v);
  return out;
}

struct Linearizer {
  const std::vector<PhaseFunction>& phases;
  int d;
  std::int64_t N;
  double target;
  const LinearizeParams& params;
  Factor out;
  double worst = 0.0;

  void to_xi(const Point& p0, std::int64_t q, std::int64_t L) {
    CubeProgression c{p0, q, L};
    for (auto& x : c.u) x -= q;
    c.for_each([&](const Point& p) { out.xi.push_back(p); });
  }

  // Points p0 + q y with y in {0..L-1}^d, except those with some y_i >= keep go to Xi.
  void leftovers(const Point& p0, std::int64_t q, std::int64_t L, std::int64_t keep) {
    CubeProgression c{p0, q, L};
    for (auto& x : c.u) x -= q;
    c.for_each([&](const Point& p) {
      for (int i = 0; i < d; ++i)
        if ((p[static_cast<std::size_t>(i)] - p0[static_cast<std::size_t>(i)]) / q >= keep) {
          out.xi.push_back(p);
          return;
        }
    });
  }

  void run(const Point& p0, std::int64_t q, std::int64_t L) {
    CubeProgression cube{p0, q, L};
    for (auto& x : cube.u) x -= q;
    const double diam = cube_diameter(phases, cube);
    if (diam <= target) {
      out.atoms.push_back(cube);
      return;
    }
    if (L <= 1 || L < params.L_min) {
      worst = std::max(worst, diam);
      to_xi(p0, q, L);
      return;
    }
    // Top-degree restricted coefficients and the halving / residue-split estimates.
    int e = 0;
    std::vector<std::map<std::vector<int>, std::int64_t>> restricted;
    for (const auto& ph : phases) {
      restricted.push_back(restrict_phase(ph, p0, q));
      for (const auto& [ex, v] : restricted.back()) e = std::max(e, std::accumulate(ex.begin(), ex.end(), 0));
    }
    std::vector<RationalAngle> thetas;
    for (std::size_t j = 0; j < phases.size(); ++j)
      for (const auto& [ex, v] : restricted[j])
        if (std::accumulate(ex.begin(), ex.end(), 0) == e) thetas.push_back({v, phases[j].den});
    std::int64_t qs = 1;
    const auto qcap = static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(L), 0.25)));
    if (e >= 1 && qcap >= 2 && !thetas.empty()) {
      const auto da = simultaneous_approx(thetas, e, qcap);
      double top = 0.0;
      for (const auto& t : thetas) top = std::max(top, torus_norm(static_cast<double>(static_cast<long double>(t.num) / t.den)));
      const double halving = top * std::pow(L / 2.0, e);
      const double split = da.achieved * std::pow(static_cast<double>(L) / static_cast<double>(da.q), e);
      if (da.q > 1 && split < halving) qs = da.q;
    }
    if (qs > 1) {
      split_residues(p0, q, L, qs);
    } else {
      halve(p0, q, L);
    }
  }

  void split_residues(const Point& p0, std::int64_t q, std::int64_t L, std::int64_t qs) {
    if (d == 1) {
      for (std::int64_t r = 0; r < qs && r < L; ++r) run({p0[0] + q * r}, q * qs, (L - r + qs - 1) / qs);
      return;
    }
    const std::int64_t side = L / qs;
    leftovers(p0, q, L, side * qs);
    std::vector<std::int64_t> r(static_cast<std::size_t>(d), 0);
    while (true) {
      Point base = p0;
      for (int i = 0; i < d; ++i) base[static_cast<std::size_t>(i)] += q * r[static_cast<std::size_t>(i)];
      run(base, q * qs, side);
      int i = d - 1;
      for (; i >= 0; --i) {
        if (++r[static_cast<std::size_t>(i)] < qs) break;
        r[static_cast<std::size_t>(i)] = 0;
      }
      if (i < 0) break;
    }
  }

  void halve(const Point& p0, std::int64_t q, std::int64_t L) {
    const std::int64_t h = L / 2;
    if (d == 1) {
      run(p0, q, h);
      run({p0[0] + q * h}, q, L - h);
      return;
    }
    leftovers(p0, q, L, 2 * h);
    std::vector<int> bits(static_cast<std::size_t>(d), 0);
    while (true) {
      Point base = p0;
      for (int i = 0; i < d; ++i) base[static_cast<std::size_t>(i)] += q * h * bits[static_cast<std::size_t>(i)];
      run(base, q, h);
      int i = d - 1;
      for (; i >= 0; --i) {
        if (++bits[static_cast<std::size_t>(i)] < 2) break;
        bits[static_cast<std::size_t>(i)] = 0;
      }
      if (i < 0) break;
    }
  }
};

}  // namespace detail

/// Partition [N]^d into cube progressions on which every phase has diameter at most the target,
/// plus an exceptional set. Cells are refined recursively: by residue classes modulo the q found by
/// simultaneous approximation of the top-degree coefficients when that shrinks the estimated
/// variation more than halving, and by halving otherwise.
inline Factor linearize(const std::vector<PhaseFunction>& phases, std::int64_t N, int d, const LinearizeParams& params = {}) {
  if (N < 1 || d < 1) throw std::invalid_argument("linearize: N and d must be >= 1");
  for (const auto& ph : phases) {
    ph.validate();
    if (ph.d != d) throw std::invalid_argument("linearize: phase dimension mismatch");
  }
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(N);
  if (total > params.max_points) throw GuardError("linearize.size", "N^d exceeds the point cap");
  const double target = params.resolved_target(N);
  detail::Linearizer lin{phases, d, N, target, params, {}, 0.0};
  lin.out.d = d;
  lin.out.N = N;
  lin.run(Point(static_cast<std::size_t>(d), 1), 1, N);
  std::sort(lin.out.xi.begin(), lin.out.xi.end());
  const double frac = static_cast<double>(lin.out.xi.size()) / static_cast<double>(total);
  if (frac > params.xi_max) {
    std::ostringstream os;
    os << "exceptional set fraction " << frac << " exceeds " << params.xi_max << "; worst cell diameter " << lin.worst;
    throw LinearizeInfeasible(os.str(), frac, lin.worst);
  }
  return std::move(lin.out);
}

// ---------------------------------------------------------------------------
// Conditional expectation

/// Atom-wise averages; Xi is averaged as a single atom.
inline WeightFn cond_expectation(const WeightFn& f, const Factor& B) {
  if (f.dimension() != B.d || f.N() != B.N) throw std::invalid_argument("cond_expectation: factor does not partition the support box");
  const auto lab = B.labels();
  const std::size_t groups = B.atoms.size() + 1;
  std::vector<ComplexCompensatedSum> sums(groups);
  std::vector<std::size_t> counts(groups, 0);
  auto slot = [&](int l) { return l < 0 ? B.atoms.size() : static_cast<std::size_t>(l); };
  for (std::size_t i = 0; i < lab.size(); ++i) {
    sums[slot(lab[i])].add(f[i]);
    ++counts[slot(lab[i])];
  }
  std::vector<cplx> means(groups);
  for (std::size_t g = 0; g < groups; ++g)
    if (counts[g]) means[g] = sums[g].value() / static_cast<double>(counts[g]);
  std::vector<cplx> vals(lab.size());
  for (std::size_t i = 0; i < lab.size(); ++i) vals[i] = means[slot(lab[i])];
  return WeightFn(f.dimension(), f.N(), std::move(vals));
}

/// Exact version for rational-valued functions (values in box order).
inline std::vector<Rational> cond_expectation_exact(const std::vector<Rational>& f, const Factor& B) {
  if (f.size() != B.box_size()) throw std::invalid_argument("cond_expectation: factor does not partition the support box");
  const auto lab = B.labels();
  const std::size_t groups = B.atoms.size() + 1;
  std::vector<Rational> sums(groups, 0);
  std::vector<std::int64_t> counts(groups, 0);
  auto slot = [&](int l) { return l < 0 ? B.atoms.size() : static_cast<std::size_t>(l); };
  for (std::size_t i = 0; i < lab.size(); ++i) {
    sums[slot(lab[i])] += f[i];
    ++counts[slot(lab[i])];
  }
  std::vector<Rational> out(lab.size());
  for (std::size_t i = 0; i < lab.size(); ++i) {
    const auto g = slot(lab[i]);
    out[i] = sums[g] / counts[g];
  }
  return out;
}

// ---------------------------------------------------------------------------
// L^2 density increment

struct L2Increment {
  bool found = false;
  std::size_t atom_index = 0;
  CubeProgression atom;
  Rational delta;         // |A| / N^d
  Rational density;       // |A cap Q| / |Q| on the chosen atom
  Rational energy_sq;     // || E_B[f_A 1_{Xi^c}] ||^2_{L^2[N]}
  double kappa = 0.0;
  double lower_bound = 0.0;  // guaranteed density on the best atom
  double correction = 0.0;   // (1 + kappa^2/2) delta - lower_bound
  Rational xi_fraction;      // |Xi| / N^d
  Rational a_xi;             // |A cap Xi| / N^d

  nlohmann::json to_json() const {
    nlohmann::json j{{"found", found},
                     {"delta", delta.str()},
                     {"energy", std::sqrt(static_cast<double>(energy_sq))},
                     {"kappa", kappa},
                     {"lower_bound", lower_bound},
                     {"correction", correction},
                     {"xi_fraction", xi_fraction.str()},
                     {"a_xi", a_xi.str()}};
    if (found) {
      j["atom"] = atom.to_json();
      j["density"] = density.str();
      j["density_value"] = static_cast<double>(density);
    }
    return j;
  }
};

/// Densest atom when || E_B[f_A 1_{Xi^c}] || >= kappa delta. With xi = |Xi|/N^d and a = |A cap Xi|/N^d,
/// the best atom has density at least [kappa^2 delta^2 + 2 delta (delta - a) - delta^2 (1 - xi)] / (delta - a).
inline L2Increment l2_increment(const PointSet& A, const Factor& B, double kappa) {
  if (A.size() == 0) throw std::invalid_argument("l2_increment: A is empty");
  const auto lab = B.labels();
  const auto total = static_cast<std::int64_t>(lab.size());
  std::vector<std::int64_t> hits(B.atoms.size(), 0);
  std::int64_t in_xi = 0;
  for (const auto& p : A.points) {
    if (!inside_box(p, B.N)) throw std::invalid_argument("l2_increment: A not inside [N]^d");
    const int l = lab[box_index(p, B.N)];
    if (l < 0)
      ++in_xi;
    else
      ++hits[static_cast<std::size_t>(l)];
  }
  L2Increment r;
  r.kappa = kappa;
  r.delta = Rational(static_cast<std::int64_t>(A.size()), total);
  r.xi_fraction = Rational(static_cast<std::int64_t>(B.xi.size()), total);
  r.a_xi = Rational(in_xi, total);
  Rational e2 = 0;
  for (std::size_t i = 0; i < B.atoms.size(); ++i) {
    const auto sz = B.atoms[i].size();
    const Rational dev = Rational(hits[i], sz) - r.delta;
    e2 += dev * dev * sz;
  }
  r.energy_sq = e2 / total;
  const double delta = static_cast<double>(r.delta);
  const double xi = static_cast<double>(r.xi_fraction), a = static_cast<double>(r.a_xi);
  const double da = delta - a;
  const double k2d2 = kappa * kappa * delta * delta;
  r.lower_bound = da > 0 ? (k2d2 + 2.0 * delta * da - delta * delta * (1.0 - xi)) / da : 0.0;
  r.correction = (1.0 + 0.5 * kappa * kappa) * delta - r.lower_bound;
  if (static_cast<double>(r.energy_sq) < k2d2 || B.atoms.empty()) return r;
  std::size_t best = 0;
  for (std::size_t i = 1; i < B.atoms.size(); ++i) {
    const Rational di = Rational(hits[i], B.atoms[i].size()), db = Rational(hits[best], B.atoms[best].size());
    if (di > db || (di == db && (B.atoms[i].size() > B.atoms[best].size() ||
                                 (B.atoms[i].size() == B.atoms[best].size() && B.atoms[i].first() < B.atoms[best].first()))))
      best = i;
  }
  r.found = true;
  r.atom_index = best;
  r.atom = B.atoms[best];
  r.density = Rational(hits[best], B.atoms[best].size());
  if (static_cast<double>(r.density) < r.lower_bound * (1.0 - 1e-12) - 1e-15)
    throw InvariantViolation("l2_increment: best atom density below the guaranteed bound");
  return r;
}

// ---------------------------------------------------------------------------
// Direct search

struct SearchResult {
  std::optional<SolutionTuple> solution;
  bool complete = false;  // every solution in A^s was examined
  std::uint64_t examined = 0;
};

namespace detail {
struct I128VecHash {
  std::size_t operator()(const std::vector<i128>& v) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto x : v) {
      const auto u = static_cast<u128>(x);
      h = (h ^ static_cast<std::uint64_t>(u)) * 1099511628211ULL;
      h = (h ^ static_cast<std::uint64_t>(u >> 64)) * 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};
}  // namespace detail

/// First nontrivial solution in A^s in lexicographic order of the head variables, by meeting the
/// head tuples against a hash table of the tail tuples.
inline SearchResult find_nontrivial_solution(const PolySystem& P, const Lambda& lambda, const PointSet& A,
                                             std::uint64_t max_table = std::uint64_t{1} << 22,
                                             std::uint64_t max_head = std::uint64_t{1} << 26) {
  SearchResult res;
  const std::size_t s = lambda.size(), n = A.size();
  if (s < 2 || n == 0) {
    res.complete = true;
    return res;
  }
  if (!fits_i128(P, lambda, [&] {
        std::int64_t m = 1;
        for (const auto& p : A.points)
          for (auto x : p) m = std::max(m, x < 0 ? -x : x);
        return m;
      }()))
    throw GuardError("search.overflow", "values exceed 128-bit range");
  const std::size_t h = split_point(s), t = s - h;
  long double tail_size = 1;
  for (std::size_t i = 0; i < t; ++i) tail_size *= static_cast<long double>(n);
  if (tail_size > static_cast<long double>(max_table)) throw GuardError("search.table", "tail table exceeds the cap");
  std::vector<std::vector<i128>> vals(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = evaluate(P, A.points[i]);
  const auto r = static_cast<std::size_t>(P.rank());

  std::unordered_map<std::vector<i128>, std::vector<std::uint32_t>, detail::I128VecHash> table;
  std::vector<std::size_t> idx(t, 0);
  const auto tail_count = static_cast<std::size_t>(tail_size);
  for (std::size_t c = 0; c < tail_count; ++c) {
    std::vector<i128> key(r, 0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < r; ++j) key[j] += static_cast<i128>(lambda[h + i]) * vals[idx[i]][j];
    auto& slot = table[key];
    for (std::size_t i = 0; i < t; ++i) slot.push_back(static_cast<std::uint32_t>(idx[i]));
    for (std::size_t i = t; i-- > 0;) {
      if (++idx[i] < n) break;
      idx[i] = 0;
    }
  }
  std::vector<std::size_t> head(h, 0);
  std::vector<i128> key(r);
  for (std::uint64_t c = 0;; ++c) {
    if (c >= max_head) return res;
    ++res.examined;
    std::fill(key.begin(), key.end(), 0);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < r; ++j) key[j] -= static_cast<i128>(lambda[i]) * vals[head[i]][j];
    if (auto it = table.find(key); it != table.end()) {
      const auto& flat = it->second;
      for (std::size_t o = 0; o < flat.size(); o += t) {
        SolutionTuple tup;
        for (std::size_t i = 0; i < h; ++i) tup.push_back(A.points[head[i]]);
        for (std::size_t i = 0; i < t; ++i) tup.push_back(A.points[flat[o + i]]);
        if (classify_solution(P, lambda, tup).tag == Triviality::Nontrivial) {
          res.solution = std::move(tup);
          return res;
        }
      }
    }
    std::size_t i = h;
    while (i-- > 0) {
      if (++head[i] < n) break;
      head[i] = 0;
    }
    if (i == static_cast<std::size_t>(-1)) break;
  }
  res.complete = true;
  return res;
}

// ---------------------------------------------------------------------------
// Increment step and iteration

struct IncrementParams {
  double c0 = 0.1;
  double kappa = 0.05;
  SpectrumParams spectrum;
  LinearizeParams linearize;
  std::uint64_t search_table = std::uint64_t{1} << 22;
  std::uint64_t search_head = std::uint64_t{1} << 26;
  int iteration_slack = 10;

  nlohmann::json to_json() const {
    return {{"c0", c0},
            {"kappa", kappa},
            {"spectrum", spectrum.to_json()},
            {"linearize", linearize.to_json()},
            {"search_table", search_table},
            {"search_head", search_head},
            {"iteration_slack", iteration_slack}};
  }
};

struct SolutionFound {
  SolutionTuple tuple;
  TrivialityClass cls;
};

struct IncrementFound {
  CubeProgression atom;
  Rational delta;
  Rational delta_new;
  std::size_t R = 0;
  std::int64_t M = 0;
  double lower_bound = 0.0;
};

struct Exhausted {
  std::string stage;
  nlohmann::json diagnostics;
};

struct IncrementOutcome {
  std::variant<SolutionFound, IncrementFound, Exhausted> value;
  nlohmann::json diagnostics = nlohmann::json::object();

  bool is_solution() const { return std::holds_alternative<SolutionFound>(value); }
  bool is_increment() const { return std::holds_alternative<IncrementFound>(value); }
  bool is_exhausted() const { return std::holds_alternative<Exhausted>(value); }

  nlohmann::json to_json() const {
    nlohmann::json j = diagnostics;
    if (const auto* s = std::get_if<SolutionFound>(&value)) {
      j["outcome"] = "solution";
      j["tuple"] = s->tuple;
    } else if (const auto* inc = std::get_if<IncrementFound>(&value)) {
      j["outcome"] = "increment";
      j["atom"] = inc->atom.to_json();
      j["delta"] = inc->delta.str();
      j["delta_new"] = inc->delta_new.str();
      j["R"] = inc->R;
      j["M"] = inc->M;
    } else {
      const auto& e = std::get<Exhausted>(value);
      j["outcome"] = "exhausted";
      j["stage"] = e.stage;
      j["detail"] = e.diagnostics;
    }
    return j;
  }
};

/// One round: direct search, then balanced function, large spectrum, phases, linearization,
/// energy test and L^2 increment. Every emitted claim is rechecked before returning.
inline IncrementOutcome increment_step(const PointSet& A, std::int64_t N, const PolySystem& P, const Lambda& lambda,
                                       const IncrementParams& params = {}) {
  if (std::accumulate(lambda.begin(), lambda.end(), std::int64_t{0}) != 0)
    throw std::invalid_argument("increment_step: lambda must sum to zero");
  if (A.d != P.dimension()) throw std::invalid_argument("increment_step: dimension mismatch");
  for (const auto& p : A.points)
    if (!inside_box(p, N)) throw std::invalid_argument("increment_step: A not inside [N]^d");
  IncrementOutcome out;
  out.diagnostics["N"] = N;
  out.diagnostics["size"] = A.size();
  if (A.size() == 0) {
    out.value = Exhausted{"empty", {}};
    return out;
  }
  try {
    const auto sr = find_nontrivial_solution(P, lambda, A, params.search_table, params.search_head);
    out.diagnostics["search_complete"] = sr.complete;
    if (sr.solution) {
      auto cls = classify_solution(P, lambda, *sr.solution);
      if (!satisfies(P, lambda, *sr.solution) || cls.tag != Triviality::Nontrivial)
        throw InvariantViolation("increment_step: direct search returned an invalid solution");
      out.value = SolutionFound{*sr.solution, cls};
      return out;
    }
  } catch (const GuardError& g) {
    out.diagnostics["search_guard"] = g.guard();
  }

  const auto bal = balanced_fn(A, N);
  const double delta = static_cast<double>(bal.delta);
  std::vector<cplx> scaled(bal.f.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = bal.f[i] / delta;
  const WeightFn g(A.d, N, std::move(scaled));

  DiscreteModulus mod;
  Spectrum sp;
  try {
    mod = choose_modulus(P, lambda, N);
    out.diagnostics["M"] = mod.M;
    sp = large_spectrum(P, g, mod, params.spectrum);
  } catch (const GuardError& e) {
    out.value = Exhausted{"spectrum", {{"guard", e.guard()}, {"detail", e.what()}}};
    return out;
  }
  out.diagnostics["spectrum"] = sp.to_json();
  if (!sp.met) {
    out.value = Exhausted{"spectrum", {{"reason", "prefix rule not met"}}};
    return out;
  }
  std::vector<PhaseFunction> phases;
  try {
    for (const auto& xi : sp.freqs) phases.push_back(phase_from_frequency(P, mod, xi));
  } catch (const GuardError& e) {
    out.value = Exhausted{"phases", {{"guard", e.guard()}, {"detail", e.what()}}};
    return out;
  }
  Factor B;
  try {
    B = linearize(phases, N, A.d, params.linearize);
  } catch (const LinearizeInfeasible& e) {
    out.value = Exhausted{"linearize", {{"detail", e.what()}, {"xi_fraction", e.xi_fraction()}, {"worst_diameter", e.worst_diameter()}}};
    return out;
  } catch (const GuardError& e) {
    out.value = Exhausted{"linearize", {{"guard", e.guard()}, {"detail", e.what()}}};
    return out;
  }
  if (!B.verify_partition()) throw InvariantViolation("increment_step: linearization is not a partition");
  out.diagnostics["factor"] = B.summary();
  const auto inc = l2_increment(A, B, params.kappa);
  out.diagnostics["energy"] = inc.to_json();
  if (!inc.found) {
    out.value = Exhausted{"energy", {{"reason", "energy below kappa delta"}}};
    return out;
  }
  // Recount the density on the atom from the raw set.
  std::int64_t hits = 0;
  for (const auto& p : A.points)
    if (inc.atom.contains(p)) ++hits;
  const Rational dens(hits, inc.atom.size());
  if (dens != inc.density) throw InvariantViolation("increment_step: density recount differs");
  if (dens <= bal.delta) {
    out.value = Exhausted{"increment", {{"reason", "best atom is not denser"}, {"density", dens.str()}}};
    return out;
  }
  out.value = IncrementFound{inc.atom, bal.delta, dens, sp.freqs.size(), mod.M, inc.lower_bound};
  return out;
}

struct FindResult {
  std::optional<SolutionTuple> solution;
  std::string stop;  // "solution", "exhausted" or "cap"
  std::vector<nlohmann::json> trace;
  int iterations = 0;

  std::string trace_jsonl() const {
    std::string s;
    for (const auto& t : trace) s += t.dump() + "\n";
    return s;
  }
};

/// Iteration cap ceil(log(1/delta0) / log(1 + kappa^2/2)) + slack.
inline int iteration_cap(double delta0, double kappa, int slack) {
  return static_cast<int>(std::ceil(std::log(1.0 / delta0) / std::log1p(0.5 * kappa * kappa))) + slack;
}

/// Iterates increment_step, passing to A' with A cap Q = u + q A' on every increment, and maps a
/// solution found in rescaled coordinates back to the original set.
inline FindResult find_solution(const PointSet& A, std::int64_t N, const PolySystem& P, const Lambda& lambda,
                                const IncrementParams& params = {}) {
  FindResult res;
  if (A.size() == 0) {
    res.stop = "exhausted";
    return res;
  }
  const double delta0 = static_cast<double>(A.size()) / std::pow(static_cast<double>(N), A.d);
  const int cap = iteration_cap(delta0, params.kappa, params.iteration_slack);
  const int d = A.d;
  Point shift(static_cast<std::size_t>(d), 0);
  std::int64_t scale = 1;
  PointSet cur = A;
  std::int64_t curN = N;
  for (int it = 0; it < cap; ++it) {
    res.iterations = it + 1;
    const auto step = increment_step(cur, curN, P, lambda, params);
    nlohmann::json rec = step.to_json();
    rec["step"] = it;
    rec["shift"] = shift;
    rec["scale"] = scale;
    if (const auto* sol = std::get_if<SolutionFound>(&step.value)) {
      const auto orig = shift_dilate(sol->tuple, shift, scale);
      for (const auto& p : orig)
        if (!std::binary_search(A.points.begin(), A.points.end(), p))
          throw InvariantViolation("find_solution: mapped solution leaves A");
      if (!satisfies(P, lambda, orig) || classify_solution(P, lambda, orig).tag != Triviality::Nontrivial)
        throw InvariantViolation("find_solution: mapped solution fails verification");
      rec["stage"] = "solution";
      res.trace.push_back(rec);
      res.solution = orig;
      res.stop = "solution";
      return res;
    }
    if (const auto* inc = std::get_if<IncrementFound>(&step.value)) {
      rec["stage"] = "increment";
      res.trace.push_back(rec);
      std::vector<Point> next;
      for (const auto& p : cur.points)
        if (inc->atom.contains(p)) {
          Point x(static_cast<std::size_t>(d));
          for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = (p[static_cast<std::size_t>(i)] - inc->atom.u[static_cast<std::size_t>(i)]) / inc->atom.q;
          next.push_back(std::move(x));
        }
      for (int i = 0; i < d; ++i) shift[static_cast<std::size_t>(i)] += scale * inc->atom.u[static_cast<std::size_t>(i)];
      scale *= inc->atom.q;
      cur = explicit_points(d, std::move(next));
      curN = inc->atom.L;
      const Rational dens(static_cast<std::int64_t>(cur.size()), inc->atom.size());
      if (dens != inc->delta_new) throw InvariantViolation("find_solution: rescaled density differs from the claim");
      continue;
    }
    rec["stage"] = "exhausted";
    res.trace.push_back(rec);
    res.stop = "exhausted";
    return res;
  }
  res.stop = "cap";
  return res;
}

}  // namespace addeq
