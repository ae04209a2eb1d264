#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <vector>

#include "addeq/core/errors.hpp"
#include "addeq/core/kahan.hpp"
#include "addeq/core/numtheory.hpp"

namespace addeq {

struct QuadResult {
  cplx value;
  double error = 0.0;
  long evaluations = 0;
};

namespace detail {

inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                  0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b;
  cplx value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const cplx fc = f(c);
  cplx kron = fc * kWgk[7];
  cplx gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    const cplx f1 = f(c - dx), f2 = f(c + dx);
    kron += (f1 + f2) * kWgk[j];
    if (j % 2 == 1) gauss += (f1 + f2) * kWg[j / 2];
  }
  kron *= h;
  gauss *= h;
  return {a, b, kron, std::abs(kron - gauss)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (7/15) integration of a complex function.
/// Throws QuadratureError if abs_tol is not met within max_segments.
template <class F>
QuadResult integrate(F&& f, double a, double b, double abs_tol, int max_segments = 20000) {
  if (a == b) return {};
  std::priority_queue<detail::Segment> heap;
  auto first = detail::gk15(f, a, b);
  cplx total = first.value;
  double err = first.error;
  long evals = 15;
  heap.push(first);
  int segments = 1;
  while (err > abs_tol && segments < max_segments) {
    const auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      heap.push(worst);
      break;
    }
    auto left = detail::gk15(f, worst.a, mid);
    auto right = detail::gk15(f, mid, worst.b);
    evals += 30;
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++segments;
  }
  // Re-sum from the leaves to remove drift of the running updates.
  ComplexCompensatedSum sum;
  CompensatedSum esum;
  std::vector<detail::Segment> leaves;
  leaves.reserve(heap.size());
  while (!heap.empty()) {
    leaves.push_back(heap.top());
    heap.pop();
  }
  std::sort(leaves.begin(), leaves.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  for (const auto& s : leaves) {
    sum.add(s.value);
    esum.add(s.error);
  }
  QuadResult r{sum.value(), esum.value(), evals};
  if (r.error > abs_tol)
    throw QuadratureError("adaptive quadrature did not converge", std::abs(r.value), r.error);
  return r;
}

/// Composite adaptive integration over [a, b] split into `panels` equal pieces.
template <class F>
QuadResult integrate_panels(F&& f, double a, double b, long panels, double abs_tol) {
  panels = std::max<long>(1, panels);
  const double h = (b - a) / static_cast<double>(panels);
  const double tol_each = abs_tol / static_cast<double>(panels);
  ComplexCompensatedSum sum;
  double err = 0.0;
  long evals = 0;
  for (long p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    const double hi = (p + 1 == panels) ? b : a + h * static_cast<double>(p + 1);
    auto r = integrate(f, lo, hi, tol_each, 2000);
    sum.add(r.value);
    err += r.error;
    evals += r.evaluations;
  }
  return {sum.value(), err, evals};
}

// ---------------------------------------------------------------------------
// Fresnel integrals

/// Phi(t) = C(t) + i S(t) = \int_0^t exp(i pi u^2 / 2) du.
/// For t >= 0 we also expose the auxiliary R(t) with Phi(t) = (1+i)/2 - exp(i pi t^2/2) R(t).
namespace detail {

inline cplx fresnel_series(double ax) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double sum = 0.0, sums = 0.0, sumc = ax, sign = 1.0;
  const double fact = 0.5 * std::numbers::pi * ax * ax;
  bool odd = true;
  double term = ax;
  int n = 3;
  for (int k = 1; k <= 200; ++k) {
    term *= fact / k;
    sum += sign * term / n;
    const double test = std::abs(sum) * eps;
    if (odd) {
      sign = -sign;
      sums = sum;
      sum = sumc;
    } else {
      sumc = sum;
      sum = sums;
    }
    if (term < test) break;
    odd = !odd;
    n += 2;
  }
  return {sumc, sums};
}

// Lentz continued fraction for the auxiliary function, valid for ax > 1.5.
inline cplx fresnel_aux_cf(double ax) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr double fpmin = std::numeric_limits<double>::min() / eps;
  cplx b(1.0, -std::numbers::pi * ax * ax);
  cplx cc = 1.0 / fpmin;
  cplx d = 1.0 / b;
  cplx h = d;
  int n = -1;
  for (int k = 2; k <= 400; ++k) {
    n += 2;
    const double a = -static_cast<double>(n) * (n + 1);
    b += 4.0;
    d = 1.0 / (a * d + b);
    cc = b + a / cc;
    const cplx del = cc * d;
    h *= del;
    if (std::abs(del.real() - 1.0) + std::abs(del.imag()) <= eps) break;
  }
  h *= cplx(ax, -ax);
  return cplx(0.5, 0.5) * h;
}

}  // namespace detail

/// R(t) for t >= 0, see above.
inline cplx fresnel_aux(double t) {
  if (t > 1.5) return detail::fresnel_aux_cf(t);
  const double th = 0.5 * std::numbers::pi * t * t;
  return (cplx(0.5, 0.5) - detail::fresnel_series(t)) * cplx(std::cos(th), -std::sin(th));
}

inline cplx fresnel(double t) {
  const double ax = std::abs(t);
  cplx v;
  if (ax <= 1.5) {
    v = detail::fresnel_series(ax);
  } else {
    const double th = 0.5 * std::numbers::pi * ax * ax;
    v = cplx(0.5, 0.5) - cplx(std::cos(th), std::sin(th)) * detail::fresnel_aux_cf(ax);
  }
  return t < 0 ? -v : v;
}

// ---------------------------------------------------------------------------
// Oscillatory integrals

/// I(beta; N) = \int_0^N e(beta_1 x + ... + beta_k x^k) dx by adaptive composite quadrature.
inline QuadResult osc_integral_curve(const std::vector<double>& beta, double N, double tol) {
  if (!(tol > 0)) throw std::invalid_argument("osc_integral: tol must be positive");
  double freq = 0.0;
  for (std::size_t j = 0; j < beta.size(); ++j)
    freq += static_cast<double>(j + 1) * std::abs(beta[j]) * std::pow(N, static_cast<double>(j + 1));
  const long panels = static_cast<long>(std::min(1.0e6, std::ceil(1.0 + freq)));
  auto f = [&](double x) {
    long double ph = 0.0L, xp = 1.0L;
    for (double b : beta) {
      xp *= x;
      ph += static_cast<long double>(b) * xp;
    }
    return e1(ph);
  };
  return integrate_panels(f, 0.0, N, panels, tol);
}

/// I(beta, xi; N) = \int_0^N e(beta x^2 + xi x) dx by adaptive composite quadrature.
inline QuadResult osc_integral_quadrature(double beta, double xi, double N, double tol) {
  return osc_integral_curve({xi, beta}, N, tol);
}

/// I(beta, xi; 1) in closed form through Fresnel integrals. Falls back to
/// quadrature when |beta| is too small for the completed square to be stable.
inline cplx osc_integral_unit(double beta, double xi) {
  if (std::abs(beta) < 1e-6) {
    if (beta == 0.0) {
      if (xi == 0.0) return 1.0;
      const double t = 2.0 * std::numbers::pi * xi;
      return (e1(xi) - 1.0) / cplx(0.0, t);
    }
    return osc_integral_quadrature(beta, xi, 1.0, 1e-13).value;
  }
  if (beta < 0) return std::conj(osc_integral_unit(-beta, -xi));
  const double sb = std::sqrt(beta);
  const double c = xi / (2.0 * beta);
  const double u1 = 2.0 * sb * c;
  const double u2 = 2.0 * sb * (1.0 + c);
  // Phi(u) = sgn(u) [(1+i)/2 - exp(i pi u^2/2) R(|u|)] and the endpoint phases
  // exp(i pi u^2/2) e(-xi^2/(4 beta)) = e(beta x^2 + xi x) at x = 0, 1.
  const auto sgn = [](double u) { return u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0); };
  const long double cl = static_cast<long double>(xi) / (2.0L * static_cast<long double>(beta));
  const cplx front = e1(-static_cast<long double>(beta) * cl * cl);
  const cplx ph0 = 1.0;
  const cplx ph1 = e1(static_cast<long double>(beta) + static_cast<long double>(xi));
  cplx total = (sgn(u2) - sgn(u1)) * cplx(0.5, 0.5) * front;
  total -= sgn(u2) * ph1 * fresnel_aux(std::abs(u2));
  total += sgn(u1) * ph0 * fresnel_aux(std::abs(u1));
  return total / (2.0 * sb);
}

}  // namespace addeq
