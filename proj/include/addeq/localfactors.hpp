#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "addeq/core/errors.hpp"
#include "addeq/core/kahan.hpp"
#include "addeq/core/numtheory.hpp"
#include "addeq/core/parallel.hpp"
#include "addeq/quadrature.hpp"
#include "addeq/systems.hpp"

namespace addeq {

inline constexpr std::int64_t kGaussModulusCap = 1'000'000;
inline constexpr std::int64_t kGaussSystemCap = 100'000'000;
inline constexpr std::int64_t kSingularSeriesCap = 10'000;

struct GaussSumResult {
  cplx value;
  std::int64_t q = 1;
  std::vector<std::int64_t> a;  // (a, b) for the quadratic case
  std::int64_t h = 1;           // gcd(a, q)
  bool vanishing = false;       // h does not divide b
};

/// S(a, b; q) = sum_{u mod q} e_q(a u^2 + b u) by direct summation.
inline GaussSumResult gauss_sum_quadratic(std::int64_t a, std::int64_t b, std::int64_t q) {
  if (q < 1) throw std::invalid_argument("gauss_sum_quadratic: q must be >= 1");
  if (q > kGaussModulusCap) throw GuardError("gauss.modulus", "q = " + std::to_string(q) + " exceeds 10^6");
  const std::int64_t ar = mod_floor(a, q), br = mod_floor(b, q);
  const RootTable roots(q);
  ComplexCompensatedSum sum;
  // idx(u) = a u^2 + b u mod q, updated incrementally: idx(u+1) = idx(u) + a(2u+1) + b.
  std::int64_t idx = 0;
  for (std::int64_t u = 0; u < q; ++u) {
    sum.add(roots[idx]);
    idx = (idx + (ar * ((2 * u + 1) % q)) % q + br) % q;
  }
  GaussSumResult r;
  r.value = sum.value();
  r.q = q;
  r.a = {a, b};
  r.h = std::gcd(ar, q);
  r.vanishing = br % r.h != 0;
  return r;
}

/// All S(a, b; m) for a, b in Z/m, using S(a, b + 2at) = e_m(-a t^2 - b t) S(a, b).
class GaussTable {
 public:
  explicit GaussTable(std::int64_t m) : m_(m), vals_(static_cast<std::size_t>(m * m)) {
    if (m < 1) throw std::invalid_argument("GaussTable: m must be >= 1");
    const RootTable roots(m);
    vals_[0] = static_cast<double>(m);
    for (std::int64_t a = 1; a < m; ++a) {
      const std::int64_t step = (2 * a) % m;
      const std::int64_t g = std::gcd(step, m);
      for (std::int64_t b0 = 0; b0 < g; ++b0) {
        ComplexCompensatedSum sum;
        std::int64_t idx = 0;
        for (std::int64_t u = 0; u < m; ++u) {
          sum.add(roots[idx]);
          idx = (idx + (a * ((2 * u + 1) % m)) % m + b0) % m;
        }
        const cplx s0 = sum.value();
        std::int64_t b = b0;
        for (std::int64_t t = 0; t < m / g; ++t) {
          const std::int64_t ph = mod_floor(-(((a * ((t * t) % m)) % m) + (b0 * t) % m), m);
          at_mut(a, b) = roots[ph] * s0;
          b = (b + step) % m;
        }
      }
    }
  }

  std::int64_t modulus() const { return m_; }
  const cplx& operator()(std::int64_t a, std::int64_t b) const {
    return vals_[static_cast<std::size_t>(mod_floor(a, m_) * m_ + mod_floor(b, m_))];
  }

 private:
  cplx& at_mut(std::int64_t a, std::int64_t b) { return vals_[static_cast<std::size_t>(a * m_ + b)]; }
  std::int64_t m_;
  std::vector<cplx> vals_;
};

struct GaussAuditCase {
  std::int64_t q = 0, a = 0, b = 0;
  double abs_value = 0.0;
  double bound = 0.0;
};

/// Exhaustive check of the quadratic Gauss sums for q <= qmax and a, b mod q.
/// Violations: |S| > zero_tol when (a, q) does not divide b, or |S| > sqrt(2 (a, q) q) + 1e-9.
/// Sums vanishing although (a, q) | b are counted separately; with q' = q / (a, q) and b' = b / (a, q)
/// they occur exactly when q' is even and b' + q'/2 is odd, which `exceptions_explained` confirms.
struct GaussAudit {
  std::int64_t qmax = 0;
  std::uint64_t checked = 0;
  std::uint64_t vanishing_checked = 0;
  std::vector<GaussAuditCase> violations;
  std::uint64_t nonvanishing_exceptions = 0;
  bool exceptions_explained = true;
  double max_ratio = 0.0;  // max |S| / sqrt(2 (a, q) q) over non-vanishing cases
  double witness_abs = 0.0;  // |S(1, 0; 4)|
  bool witness_ok = false;

  bool ok() const { return violations.empty() && witness_ok; }

  nlohmann::json to_json() const {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& c : violations) v.push_back({{"q", c.q}, {"a", c.a}, {"b", c.b}, {"abs", c.abs_value}, {"bound", c.bound}});
    return {{"qmax", qmax},
            {"checked", checked},
            {"vanishing_checked", vanishing_checked},
            {"violations", v},
            {"nonvanishing_exceptions", nonvanishing_exceptions},
            {"exceptions_explained", exceptions_explained},
            {"max_ratio", max_ratio},
            {"witness", {{"q", 4}, {"a", 1}, {"b", 0}, {"abs", witness_abs}, {"expected", 2.0 * std::sqrt(2.0)}}},
            {"witness_ok", witness_ok},
            {"ok", ok()}};
  }
};

inline GaussAudit gauss_audit(std::int64_t qmax, std::size_t max_violations = 64) {
  if (qmax < 1) throw std::invalid_argument("gauss_audit: qmax must be >= 1");
  if (qmax > 4096) throw GuardError("gauss.audit", "qmax exceeds 4096");
  GaussAudit au;
  au.qmax = qmax;
  for (std::int64_t q = 1; q <= qmax; ++q) {
    const GaussTable tab(q);
    const double zero_tol = 1e-9 * static_cast<double>(q);
    for (std::int64_t a = 0; a < q; ++a) {
      const std::int64_t h = std::gcd(a, q);
      const double bound = std::sqrt(2.0 * static_cast<double>(h) * static_cast<double>(q));
      for (std::int64_t b = 0; b < q; ++b) {
        const double s = std::abs(tab(a, b));
        ++au.checked;
        if (b % h != 0) {
          ++au.vanishing_checked;
          if (s > zero_tol && au.violations.size() < max_violations) au.violations.push_back({q, a, b, s, 0.0});
          continue;
        }
        if (s > bound + 1e-9 && au.violations.size() < max_violations) au.violations.push_back({q, a, b, s, bound});
        au.max_ratio = std::max(au.max_ratio, s / bound);
        const std::int64_t qp = q / h, bp = b / h;
        const bool predicted = qp % 2 == 0 && (bp + qp / 2) % 2 == 1;
        if (s <= zero_tol) ++au.nonvanishing_exceptions;
        if ((s <= zero_tol) != predicted) au.exceptions_explained = false;
      }
    }
  }
  au.witness_abs = std::abs(gauss_sum_quadratic(1, 0, 4).value);
  au.witness_ok = std::abs(au.witness_abs - 2.0 * std::sqrt(2.0)) <= 1e-12;
  return au;
}

/// S(a, q) = sum_{u in Z_q^d} e_q(sum_j a_j P_j(u)), with |S| / q^{d - 1/k} reported.
struct GaussSystemResult {
  cplx value;
  double hua_ratio = 0.0;
};

inline GaussSystemResult gauss_sum_system(const PolySystem& P, const std::vector<std::int64_t>& a, std::int64_t q) {
  if (static_cast<int>(a.size()) != P.rank()) throw std::invalid_argument("gauss_sum_system: one coefficient per polynomial");
  if (q < 1) throw std::invalid_argument("gauss_sum_system: q must be >= 1");
  const int d = P.dimension();
  double size = 1.0;
  for (int i = 0; i < d; ++i) size *= static_cast<double>(q);
  if (size > static_cast<double>(kGaussSystemCap)) throw GuardError("gauss.system", "q^d exceeds 10^8");
  const RootTable roots(q);
  ComplexCompensatedSum sum;
  Point u(static_cast<std::size_t>(d), 0);
  const auto total = static_cast<std::int64_t>(size);
  for (std::int64_t t = 0; t < total; ++t) {
    const auto v = evaluate(P, u);
    i128 idx = 0;
    for (std::size_t j = 0; j < v.size(); ++j) idx = (idx + (static_cast<i128>(mod_floor(a[j], q)) * (v[j] % q))) % q;
    sum.add(roots.at(static_cast<std::int64_t>(idx)));
    for (int i = d - 1; i >= 0; --i) {
      if (++u[static_cast<std::size_t>(i)] < q) break;
      u[static_cast<std::size_t>(i)] = 0;
    }
  }
  GaussSystemResult r;
  r.value = sum.value();
  r.hua_ratio = std::abs(r.value) / std::pow(static_cast<double>(q), d - 1.0 / P.degree());
  return r;
}

// ---------------------------------------------------------------------------
// Oscillatory integrals

/// I(beta, xi; N) by adaptive quadrature with absolute error tol.
inline QuadResult osc_integral(double beta, double xi, double N, double tol) {
  return osc_integral_quadrature(beta, xi, N, tol);
}

/// I(beta; N) along the moment curve (x, x^2, ..., x^k).
inline QuadResult osc_integral(const std::vector<double>& beta, double N, double tol) {
  return osc_integral_curve(beta, N, tol);
}

/// Integral over [-hi, -lo] and [lo, hi] split at powers of two, with adaptive pieces.
template <class F>
cplx integrate_symmetric_shell(F&& f, double lo, double hi, double tol) {
  if (!(hi > lo)) return 0.0;
  std::vector<double> cuts{lo};
  double x = 1.0;
  while (x <= lo) x *= 2.0;
  for (; x < hi; x *= 2.0) cuts.push_back(x);
  cuts.push_back(hi);
  const double pieces = 2.0 * static_cast<double>(cuts.size() - 1);
  ComplexCompensatedSum sum;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    sum.add(integrate(f, -cuts[i + 1], -cuts[i], tol / pieces, 50000).value);
    sum.add(integrate(f, cuts[i], cuts[i + 1], tol / pieces, 50000).value);
  }
  return sum.value();
}

/// Integral over [-T, T] split at +-1, +-2, +-4, ... with adaptive pieces.
template <class F>
cplx integrate_symmetric_dyadic(F&& f, double T, double tol) {
  return integrate_symmetric_shell(f, 0.0, T, tol);
}

// ---------------------------------------------------------------------------
// Singular series and integrals

struct PartialEntry {
  double level;  // q for series, T for integrals
  double value;
  double term;
};

struct SingularReport {
  std::string kind;
  double T = 0;
  std::vector<PartialEntry> partials;
  double value = 0.0;
  double imag_residue = 0.0;
  double tail_estimate = 0.0;
  bool tail_finite = true;
  double exponent = 0.0;
  double tail_constant = 0.0;
  bool below_threshold = false;
  double threshold = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : partials) parts.push_back({{"level", p.level}, {"value", p.value}, {"term", p.term}});
    return {{"kind", kind},
            {"T", T},
            {"value", value},
            {"imag_residue", imag_residue},
            {"tail_estimate", tail_finite ? nlohmann::json(tail_estimate) : nlohmann::json(nullptr)},
            {"tail_finite", tail_finite},
            {"exponent", exponent},
            {"tail_constant", tail_constant},
            {"below_threshold", below_threshold},
            {"threshold", threshold},
            {"partials", parts}};
  }
};

namespace detail {

/// Sum over q <= T of sum_{e | q} mu(e) w(q / e), returning the per-q terms.
inline std::vector<cplx> mobius_terms(const std::vector<cplx>& w, std::int64_t T) {
  const auto mu = mobius_sieve(static_cast<int>(T));
  std::vector<cplx> term(static_cast<std::size_t>(T) + 1, 0.0);
  for (std::int64_t q = 1; q <= T; ++q)
    for (auto e : divisors(q)) {
      const int m = mu[static_cast<std::size_t>(e)];
      if (m != 0) term[static_cast<std::size_t>(q)] += static_cast<double>(m) * w[static_cast<std::size_t>(q / e)];
    }
  return term;
}

inline void fill_series_tail(SingularReport& rep, const std::vector<cplx>& term, double gamma) {
  rep.exponent = gamma;
  double C = 0.0;
  for (std::size_t q = 1; q < term.size(); ++q) C = std::max(C, std::abs(term[q]) / std::pow(static_cast<double>(q), gamma));
  rep.tail_constant = C;
  if (gamma < -1.0) {
    rep.tail_estimate = C * std::pow(rep.T, gamma + 1.0) / (-gamma - 1.0);
    rep.tail_finite = true;
  } else {
    rep.tail_estimate = std::numeric_limits<double>::infinity();
    rep.tail_finite = false;
  }
}

}  // namespace detail

/// Truncated singular series of the diagonal parabola system with coefficients lambda.
inline SingularReport singular_series_parabola(const Lambda& lambda, int d, std::int64_t T) {
  if (T < 1) throw std::invalid_argument("singular_series: T must be >= 1");
  if (T > kSingularSeriesCap) throw GuardError("singular.T", "T = " + std::to_string(T) + " exceeds 10^4");
  for (auto l : lambda)
    if (l == 0) throw std::invalid_argument("singular_series: lambda entries must be nonzero");
  const double s = static_cast<double>(lambda.size());
  // W(m) = sum_{a mod m} [ sum_{b mod m} prod_i m^{-1} S(lambda_i a, lambda_i b; m) ]^d
  std::vector<cplx> w(static_cast<std::size_t>(T) + 1, 0.0);
  parallel_chunks(static_cast<std::size_t>(T), 1, [&](std::size_t, std::size_t b, std::size_t) {
    const std::int64_t m = static_cast<std::int64_t>(b) + 1;
    const GaussTable G(m);
    const double inv = 1.0 / static_cast<double>(m);
    ComplexCompensatedSum outer;
    for (std::int64_t a = 0; a < m; ++a) {
      ComplexCompensatedSum inner;
      for (std::int64_t bb = 0; bb < m; ++bb) {
        cplx prod = 1.0;
        for (auto l : lambda) {
          prod *= G(l * a, l * bb) * inv;
          if (prod == cplx{}) break;
        }
        inner.add(prod);
      }
      outer.add(std::pow(inner.value(), d));
    }
    w[static_cast<std::size_t>(m)] = outer.value();
  });
  const auto term = detail::mobius_terms(w, T);
  SingularReport rep;
  rep.kind = "singular_series";
  rep.T = static_cast<double>(T);
  ComplexCompensatedSum acc;
  for (std::int64_t q = 1; q <= T; ++q) {
    acc.add(term[static_cast<std::size_t>(q)]);
    rep.partials.push_back({static_cast<double>(q), acc.value().real(), term[static_cast<std::size_t>(q)].real()});
  }
  rep.value = acc.value().real();
  rep.imag_residue = acc.value().imag();
  rep.threshold = 2.0 + 4.0 / d;
  rep.below_threshold = s <= rep.threshold;
  detail::fill_series_tail(rep, term, d + 1.0 - d * s / 2.0);
  return rep;
}

namespace detail {

template <class G>
cplx parabola_inner(G& g, double lo, double hi, double beta, double T, int d, double tol) {
  // Inner tolerances weighted by 1/(1+|beta|) integrate to at most tol/2 over [-T, T].
  return integrate_symmetric_shell(g, lo, hi, tol / (4.0 * (1.0 + std::abs(beta)) * std::log1p(T) * d));
}

inline auto parabola_integrand(const Lambda& lambda, double beta) {
  return [&lambda, beta](double xi) {
    cplx prod = 1.0;
    for (auto l : lambda) prod *= osc_integral_unit(static_cast<double>(l) * beta, static_cast<double>(l) * xi);
    return prod;
  };
}

inline cplx parabola_integral_at(const Lambda& lambda, int d, double T, double tol) {
  auto outer = [&](double beta) {
    auto g = parabola_integrand(lambda, beta);
    return std::pow(parabola_inner(g, 0.0, T, beta, T, d, tol), d);
  };
  return integrate_symmetric_dyadic(outer, T, tol);
}

}  // namespace detail

/// Truncated singular integral over [-T, T]^{d+1}. The ledger holds the
/// refinements T / 2^j for j < levels (and T / 2^j >= 1), in increasing order.
inline SingularReport singular_integral_parabola(const Lambda& lambda, int d, double T, double tol, int ledger_levels = 4) {
  if (!(tol > 0)) throw std::invalid_argument("singular_integral: tol must be positive");
  if (!(T >= 1)) throw std::invalid_argument("singular_integral: T must be >= 1");
  if (ledger_levels < 1) throw std::invalid_argument("singular_integral: ledger_levels must be >= 1");
  std::vector<double> levels;
  for (double t = T; t >= 1.0 && static_cast<int>(levels.size()) < ledger_levels; t /= 2.0) levels.push_back(t);
  std::reverse(levels.begin(), levels.end());
  std::vector<cplx> vals(levels.size());
  parallel_chunks(levels.size(), 1, [&](std::size_t, std::size_t b, std::size_t) {
    vals[b] = detail::parabola_integral_at(lambda, d, levels[b], tol);
  });
  SingularReport rep;
  rep.kind = "singular_integral";
  rep.T = T;
  for (std::size_t i = 0; i < levels.size(); ++i)
    rep.partials.push_back({levels[i], vals[i].real(), i ? vals[i].real() - vals[i - 1].real() : vals[i].real()});
  rep.value = vals.back().real();
  rep.imag_residue = vals.back().imag();
  const double s = static_cast<double>(lambda.size());
  rep.exponent = 1.0 + d * (1.0 - s / 2.0);
  rep.threshold = 2.0 + 4.0 / d;
  rep.below_threshold = s <= rep.threshold;
  if (levels.size() >= 2 && rep.exponent < 0) {
    const double diff = std::abs(vals.back().real() - vals[vals.size() - 2].real());
    const double r = std::pow(2.0, rep.exponent);
    rep.tail_estimate = diff * r / (1.0 - r);
    rep.tail_constant = diff;
  } else if (rep.exponent >= 0) {
    rep.tail_finite = false;
    rep.tail_estimate = std::numeric_limits<double>::infinity();
  }
  return rep;
}

struct LocalMoments {
  SingularReport series;
  SingularReport integral;
  bool series_converges = false;    // p > 2 + 4/d
  bool integral_converges = false;  // p > 2 + 2/d
};

/// Local moments of a single factor lambda_i: series and integral of |.|^p.
inline LocalMoments local_moments_parabola(std::int64_t lambda_i, double p, int d, std::int64_t T, double tol) {
  if (!(p > 0)) throw std::invalid_argument("local_moments: p must be positive");
  if (lambda_i == 0) throw std::invalid_argument("local_moments: lambda_i must be nonzero");
  if (T > kSingularSeriesCap) throw GuardError("singular.T", "T exceeds 10^4");
  LocalMoments out;
  std::vector<cplx> w(static_cast<std::size_t>(T) + 1, 0.0);
  parallel_chunks(static_cast<std::size_t>(T), 1, [&](std::size_t, std::size_t b, std::size_t) {
    const std::int64_t m = static_cast<std::int64_t>(b) + 1;
    const GaussTable G(m);
    CompensatedSum outer;
    for (std::int64_t a = 0; a < m; ++a) {
      CompensatedSum inner;
      for (std::int64_t bb = 0; bb < m; ++bb) inner.add(std::pow(std::abs(G(lambda_i * a, lambda_i * bb)) / m, p));
      outer.add(std::pow(inner.value(), d));
    }
    w[static_cast<std::size_t>(m)] = outer.value();
  });
  const auto term = detail::mobius_terms(w, T);
  auto& sr = out.series;
  sr.kind = "local_series";
  sr.T = static_cast<double>(T);
  CompensatedSum acc;
  for (std::int64_t q = 1; q <= T; ++q) {
    acc.add(term[static_cast<std::size_t>(q)].real());
    sr.partials.push_back({static_cast<double>(q), acc.value(), term[static_cast<std::size_t>(q)].real()});
  }
  sr.value = acc.value();
  sr.threshold = 2.0 + 4.0 / d;
  sr.below_threshold = p <= sr.threshold;
  detail::fill_series_tail(sr, term, d + 1.0 - d * p / 2.0);
  out.series_converges = !sr.below_threshold;

  auto& ir = out.integral;
  ir.kind = "local_integral";
  ir.T = static_cast<double>(T);
  const double l = static_cast<double>(lambda_i);
  std::vector<double> levels;
  for (double t = static_cast<double>(T); t >= 1.0; t /= 2.0) levels.push_back(t);
  std::reverse(levels.begin(), levels.end());
  double prev = 0.0;
  for (double Tl : levels) {
    auto inner = [&](double beta) {
      auto g = [&](double xi) { return cplx(std::pow(std::abs(osc_integral_unit(l * beta, l * xi)), p), 0.0); };
      return integrate_symmetric_dyadic(g, Tl, tol / (4.0 * (1.0 + std::abs(beta)) * std::log1p(Tl) * d)).real();
    };
    auto outer = [&](double beta) { return cplx(std::pow(inner(beta), d), 0.0); };
    const double v = integrate_symmetric_dyadic(outer, Tl, tol).real();
    ir.partials.push_back({Tl, v, v - prev});
    prev = v;
  }
  ir.value = prev;
  ir.threshold = 2.0 + 2.0 / d;
  ir.below_threshold = p <= ir.threshold;
  ir.exponent = 1.0 + d * (1.0 - p / 2.0);
  out.integral_converges = !ir.below_threshold;
  if (ir.partials.size() >= 2 && ir.exponent < 0) {
    const double diff = std::abs(ir.partials.back().term);
    const double r = std::pow(2.0, ir.exponent);
    ir.tail_estimate = diff * r / (1.0 - r);
  } else if (ir.exponent >= 0) {
    ir.tail_finite = false;
    ir.tail_estimate = std::numeric_limits<double>::infinity();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Moment-curve local moments

/// S(a, q) for the curve (x, ..., x^k) with a = (a_1..a_k).
inline cplx curve_gauss_sum(const std::vector<std::int64_t>& a, std::int64_t q) {
  const RootTable roots(q);
  ComplexCompensatedSum sum;
  for (std::int64_t u = 0; u < q; ++u) {
    std::int64_t idx = 0, up = 1;
    for (auto aj : a) {
      up = (up * u) % q;
      idx = (idx + mod_floor(aj, q) * up) % q;
    }
    sum.add(roots[idx]);
  }
  return sum.value();
}

struct TarryMoments {
  SingularReport series;
  double integral = 0.0;
  bool series_converges = false;    // p > K + 2
  bool integral_converges = false;  // p > K + 1
};

/// Truncated S_p(T) = sum_{q <= T} sum_{(a, q) = 1} |q^{-1} S(a, q)|^p and
/// J_p(T) = \int_{[-T, T]^k} |I(xi; 1)|^p d xi for the degree-k moment curve.
inline TarryMoments tarry_moments(int k, double p, std::int64_t T, double Tint, double tol) {
  if (k < 1) throw std::invalid_argument("tarry_moments: k must be >= 1");
  if (!(p > 0)) throw std::invalid_argument("tarry_moments: p must be positive");
  if (T < 1) throw std::invalid_argument("tarry_moments: T must be >= 1");
  double work = 0;
  for (std::int64_t q = 1; q <= T; ++q) work += std::pow(static_cast<double>(q), k + 1.0);
  if (work > 5e9) throw GuardError("tarry.size", "series enumeration too large");
  TarryMoments out;
  auto& sr = out.series;
  sr.kind = "tarry_series";
  sr.T = static_cast<double>(T);
  std::vector<double> terms(static_cast<std::size_t>(T) + 1, 0.0);
  parallel_chunks(static_cast<std::size_t>(T), 1, [&](std::size_t, std::size_t b, std::size_t) {
    const std::int64_t q = static_cast<std::int64_t>(b) + 1;
    CompensatedSum acc;
    std::vector<std::int64_t> a(static_cast<std::size_t>(k), 0);
    std::int64_t total = 1;
    for (int i = 0; i < k; ++i) total *= q;
    for (std::int64_t t = 0; t < total; ++t) {
      std::int64_t g = q;
      for (auto x : a) g = std::gcd(g, x);
      if (g == 1) acc.add(std::pow(std::abs(curve_gauss_sum(a, q)) / static_cast<double>(q), p));
      for (int i = k - 1; i >= 0; --i) {
        if (++a[static_cast<std::size_t>(i)] < q) break;
        a[static_cast<std::size_t>(i)] = 0;
      }
    }
    terms[static_cast<std::size_t>(q)] = acc.value();
  });
  CompensatedSum acc;
  for (std::int64_t q = 1; q <= T; ++q) {
    acc.add(terms[static_cast<std::size_t>(q)]);
    sr.partials.push_back({static_cast<double>(q), acc.value(), terms[static_cast<std::size_t>(q)]});
  }
  sr.value = acc.value();
  const double K = k * (k + 1) / 2.0;
  sr.threshold = K + 2.0;
  sr.below_threshold = p <= sr.threshold;
  out.series_converges = !sr.below_threshold;
  out.integral_converges = p > K + 1.0;

  // Nested integral over [-Tint, Tint]^k.
  std::vector<double> xi(static_cast<std::size_t>(k), 0.0);
  std::function<double(int, double)> nest = [&](int level, double lt) -> double {
    auto f = [&](double x) {
      xi[static_cast<std::size_t>(level)] = x;
      if (level + 1 == k) {
        cplx I;
        if (k == 1)
          I = osc_integral_unit(0.0, xi[0]);
        else if (k == 2)
          I = osc_integral_unit(xi[1], xi[0]);
        else
          I = osc_integral_curve(xi, 1.0, 1e-10).value;
        return cplx(std::pow(std::abs(I), p), 0.0);
      }
      return cplx(nest(level + 1, lt / (2.0 * Tint)), 0.0);
    };
    return integrate_symmetric_dyadic(f, Tint, lt).real();
  };
  out.integral = nest(0, tol);
  return out;
}

}  // namespace addeq
