#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "addeq/core/errors.hpp"
#include "addeq/core/numtheory.hpp"
#include "addeq/core/parallel.hpp"
#include "addeq/counting.hpp"
#include "addeq/expsums.hpp"
#include "addeq/localfactors.hpp"
#include "addeq/quadrature.hpp"
#include "addeq/systems.hpp"

namespace addeq {

/// Arc label of a point (alpha, theta_1..theta_d) of the torus for the parabola system.
struct ArcLabel {
  bool major = false;
  std::int64_t q = 0;
  std::int64_t a = 0;
  std::vector<std::int64_t> b;
  double dist_alpha = 0.0;           // alpha - a/q, signed
  std::vector<double> dist_theta;    // theta_j - b_j/q, signed
  double Q = 0.0;
  std::int64_t N = 0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"arc", major ? "major" : "minor"}, {"Q", Q}, {"N", N}};
    if (major) {
      j["q"] = q;
      j["a"] = a;
      j["b"] = b;
      j["dist_alpha"] = dist_alpha;
      j["dist_theta"] = dist_theta;
    }
    return j;
  }
};

/// Default level Q = N^{1/4}.
inline double default_level(std::int64_t N) { return std::pow(static_cast<double>(N), 0.25); }

/// Whether Q <= N^{1/3} / 2, the range in which the major arcs are disjoint.
inline bool arcs_disjoint(double Q, std::int64_t N) { return Q <= 0.5 * std::cbrt(static_cast<double>(N)); }

namespace detail {

// Continued fraction denominators of x in (0, 1) up to qmax.
inline std::vector<std::int64_t> convergent_denominators(long double x, std::int64_t qmax) {
  std::vector<std::int64_t> out;
  std::int64_t q0 = 0, q1 = 1;
  long double r = x - std::floor(x);
  out.push_back(1);
  for (int it = 0; it < 64; ++it) {
    if (r < 1e-18L) break;
    r = 1.0L / r;
    const long double ipart = std::floor(r);
    if (ipart > static_cast<long double>(qmax)) break;
    const std::int64_t a = static_cast<std::int64_t>(ipart);
    const std::int64_t q2 = a * q1 + q0;
    if (q2 > qmax) break;
    out.push_back(q2);
    q0 = q1;
    q1 = q2;
    r -= ipart;
  }
  return out;
}

// The witness at modulus q, if any.
inline std::optional<ArcLabel> arc_witness(const std::vector<double>& point, std::int64_t q, double Q, std::int64_t N) {
  const long double Nl = static_cast<long double>(N);
  const long double wa = static_cast<long double>(Q) / (Nl * Nl), wt = static_cast<long double>(Q) / Nl;
  const long double ql = static_cast<long double>(q);
  ArcLabel lab;
  lab.major = true;
  lab.q = q;
  lab.Q = Q;
  lab.N = N;
  const long double alpha = point[0];
  const long double ar = std::round(ql * alpha);
  const long double da = alpha - ar / ql;
  if (std::abs(da) > wa) return std::nullopt;
  lab.a = mod_floor(static_cast<std::int64_t>(ar), q);
  lab.dist_alpha = static_cast<double>(da);
  std::int64_t g = std::gcd(lab.a, q);
  for (std::size_t j = 1; j < point.size(); ++j) {
    const long double th = point[j];
    const long double br = std::round(ql * th);
    const long double dt = th - br / ql;
    if (std::abs(dt) > wt) return std::nullopt;
    const std::int64_t bj = mod_floor(static_cast<std::int64_t>(br), q);
    lab.b.push_back(bj);
    lab.dist_theta.push_back(static_cast<double>(dt));
    g = std::gcd(g, bj);
  }
  if (g != 1 && q != 1) return std::nullopt;
  return lab;
}

}  // namespace detail

/// Classify a point (alpha, theta_1..theta_d) as lying on a major arc of level Q or on the minor arcs.
/// Under Q <= N^{1/3}/2 the full range q <= Q is scanned and a second witness is an invariant violation.
inline ArcLabel classify_point(const std::vector<double>& point, double Q, std::int64_t N) {
  if (point.size() < 2) throw std::invalid_argument("classify_point: point must have d + 1 >= 2 coordinates");
  if (!(Q >= 1)) throw std::invalid_argument("classify_point: Q must be >= 1");
  if (N < 1) throw std::invalid_argument("classify_point: N must be >= 1");
  const auto pt = torus_reduce(point);
  const auto qmax = static_cast<std::int64_t>(std::floor(Q));
  const bool disjoint = arcs_disjoint(Q, N);

  std::optional<ArcLabel> found;
  for (auto q : detail::convergent_denominators(pt[0], qmax)) {
    if (auto w = detail::arc_witness(pt, q, Q, N)) {
      found = w;
      break;
    }
  }
  if (found && !disjoint) return *found;
  for (std::int64_t q = 1; q <= qmax; ++q) {
    auto w = detail::arc_witness(pt, q, Q, N);
    if (!w) continue;
    if (!found) {
      found = w;
      if (!disjoint) break;
    } else if (w->q != found->q) {
      throw InvariantViolation("classify_point: two major-arc witnesses q = " + std::to_string(found->q) + " and q = " +
                               std::to_string(w->q));
    }
  }
  if (found) return *found;
  ArcLabel minor;
  minor.Q = Q;
  minor.N = N;
  return minor;
}

/// I(beta, xi; N) = N * I(N^2 beta, N xi; 1).
inline cplx osc_integral_scaled(double beta, double xi, std::int64_t N) {
  const double n = static_cast<double>(N);
  return n * osc_integral_unit(n * n * beta, n * xi);
}

/// V_i = prod_j q^{-1} S(lambda_i a, lambda_i b_j; q) I(lambda_i (alpha - a/q), lambda_i (theta_j - b_j/q); N).
inline cplx major_approximant(const ArcLabel& label, std::int64_t lambda_i, std::int64_t N) {
  if (!label.major) throw std::invalid_argument("major_approximant: label must be a major arc");
  const double l = static_cast<double>(lambda_i);
  const double qinv = 1.0 / static_cast<double>(label.q);
  cplx prod = 1.0;
  for (std::size_t j = 0; j < label.b.size(); ++j) {
    const cplx S = gauss_sum_quadratic(lambda_i * label.a, lambda_i * label.b[j], label.q).value;
    prod *= S * qinv * osc_integral_scaled(l * label.dist_alpha, l * label.dist_theta[j], N);
  }
  return prod;
}

/// F_i(alpha, theta) = prod_j G(lambda_i alpha, lambda_i theta_j).
inline cplx parabola_F(std::int64_t lambda_i, const std::vector<double>& point, std::int64_t N) {
  const long double l = static_cast<long double>(lambda_i);
  auto red = [&](double x) {
    const long double v = l * static_cast<long double>(x);
    return static_cast<double>(v - std::floor(v));
  };
  std::vector<double> theta;
  for (std::size_t j = 1; j < point.size(); ++j) theta.push_back(red(point[j]));
  return parabola_weyl_split(red(point[0]), theta, N);
}

// ---------------------------------------------------------------------------
// Arc error scan

struct ArcSample {
  std::vector<double> point;
  ArcLabel label;
  std::vector<double> ratio;  // |F_i - V_i| / N^d on major arcs, |F_i| / N^d on minor arcs
};

struct ArcScanReport {
  std::int64_t N = 0;
  int d = 1;
  double Q = 0.0;
  std::uint64_t seed = 0;
  std::size_t major_count = 0, minor_count = 0;
  std::vector<double> major_max;  // per i
  std::vector<double> minor_max;  // per i
  std::vector<ArcSample> samples;

  nlohmann::json to_json() const {
    return {{"N", N},           {"d", d},           {"Q", Q},
            {"seed", seed},     {"samples", samples.size()},
            {"major_count", major_count},           {"minor_count", minor_count},
            {"major_max", major_max},               {"minor_max", minor_max}};
  }

  std::string csv() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    os << "sample,arc,q";
    for (int j = 0; j <= d; ++j) os << ",x" << j;
    for (std::size_t i = 0; i < major_max.size(); ++i) os << ",ratio" << i + 1;
    os << "\n";
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      os << k << "," << (s.label.major ? "major" : "minor") << "," << s.label.q;
      for (double x : s.point) os << "," << x;
      for (double r : s.ratio) os << "," << r;
      os << "\n";
    }
    return os.str();
  }
};

/// Scan explicit points: worst |F_i - V_i| / N^d on major arcs and |F_i| / N^d on minor arcs.
inline ArcScanReport arc_error_scan_points(const Lambda& lambda, int d, std::int64_t N, double Q,
                                           const std::vector<std::vector<double>>& points) {
  if (d < 1) throw std::invalid_argument("arc_error_scan: d must be >= 1");
  ArcScanReport rep;
  rep.N = N;
  rep.d = d;
  rep.Q = Q;
  rep.samples.resize(points.size());
  const double scale = std::pow(static_cast<double>(N), d);
  parallel_chunks(points.size(), 16, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      if (points[k].size() != static_cast<std::size_t>(d) + 1)
        throw std::invalid_argument("arc_error_scan: point has wrong dimension");
      auto& s = rep.samples[k];
      s.point = torus_reduce(points[k]);
      s.label = classify_point(s.point, Q, N);
      for (auto l : lambda) {
        const cplx F = parabola_F(l, s.point, N);
        s.ratio.push_back(s.label.major ? std::abs(F - major_approximant(s.label, l, N)) / scale : std::abs(F) / scale);
      }
    }
  });
  rep.major_max.assign(lambda.size(), 0.0);
  rep.minor_max.assign(lambda.size(), 0.0);
  for (const auto& s : rep.samples) {
    auto& mx = s.label.major ? rep.major_max : rep.minor_max;
    (s.label.major ? rep.major_count : rep.minor_count)++;
    for (std::size_t i = 0; i < lambda.size(); ++i) mx[i] = std::max(mx[i], s.ratio[i]);
  }
  return rep;
}

/// Seeded scan. A fraction `near_fraction` of the points is drawn inside random major arcs
/// (uniform q <= Q, a, b, and offsets within the arc widths); the rest is uniform on the torus.
inline ArcScanReport arc_error_scan(const Lambda& lambda, int d, std::int64_t N, double Q, std::size_t samples,
                                    std::uint64_t seed, double near_fraction = 0.0) {
  if (samples < 1) throw std::invalid_argument("arc_error_scan: samples must be >= 1");
  if (!(near_fraction >= 0 && near_fraction <= 1)) throw std::invalid_argument("arc_error_scan: near_fraction in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto qmax = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(Q)));
  const double n = static_cast<double>(N);
  const auto near = static_cast<std::size_t>(std::floor(near_fraction * static_cast<double>(samples)));
  std::vector<std::vector<double>> pts(samples, std::vector<double>(static_cast<std::size_t>(d) + 1));
  for (std::size_t k = 0; k < samples; ++k) {
    auto& p = pts[k];
    if (k < near) {
      const auto q = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(qmax)) + 1;
      const double qd = static_cast<double>(q);
      p[0] = static_cast<double>(rng() % static_cast<std::uint64_t>(q)) / qd + (2.0 * unif(rng) - 1.0) * Q / (n * n);
      for (int j = 1; j <= d; ++j)
        p[static_cast<std::size_t>(j)] =
            static_cast<double>(rng() % static_cast<std::uint64_t>(q)) / qd + (2.0 * unif(rng) - 1.0) * Q / n;
    } else {
      for (auto& x : p) x = unif(rng);
    }
  }
  auto rep = arc_error_scan_points(lambda, d, N, Q, pts);
  rep.seed = seed;
  return rep;
}

// ---------------------------------------------------------------------------
// Asymptotic comparison

struct Prediction {
  double value = 0.0;
  double exponent = 0.0;  // ds - (d + 2)
  SingularReport series;
  SingularReport integral;
  bool below_threshold = false;

  nlohmann::json to_json() const {
    return {{"value", value},
            {"exponent", exponent},
            {"below_threshold", below_threshold},
            {"series", series.to_json()},
            {"integral", integral.to_json()}};
  }
};

struct LocalFactors {
  SingularReport series;
  SingularReport integral;
};

inline LocalFactors parabola_local_factors(const Lambda& lambda, int d, std::int64_t T, double tol) {
  return {singular_series_parabola(lambda, d, T), singular_integral_parabola(lambda, d, static_cast<double>(T), tol)};
}

inline Prediction predicted_from(const LocalFactors& lf, const Lambda& lambda, int d, std::int64_t N) {
  Prediction p;
  p.series = lf.series;
  p.integral = lf.integral;
  p.exponent = static_cast<double>(d) * static_cast<double>(lambda.size()) - (d + 2.0);
  p.value = lf.series.value * lf.integral.value * std::pow(static_cast<double>(N), p.exponent);
  p.below_threshold = static_cast<double>(lambda.size()) <= 2.0 + 4.0 / d;
  return p;
}

/// S(T) J(T) N^{ds - (d+2)} for the parabola system with coefficients lambda.
inline Prediction predicted_count(const Lambda& lambda, int d, std::int64_t N, std::int64_t T, double tol) {
  return predicted_from(parabola_local_factors(lambda, d, T, tol), lambda, d, N);
}

struct CompareRow {
  std::int64_t N = 0;
  u128 exact = 0;
  double S_T = 0.0;
  double J_T = 0.0;
  double predicted = 0.0;
  double ratio = 0.0;

  static std::string csv_header() { return "N,exact,S_T,J_T,predicted,ratio"; }
  std::string csv_row() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(12);
    os << N << "," << to_string(exact) << "," << S_T << "," << J_T << "," << predicted << "," << ratio;
    return os.str();
  }
  nlohmann::json to_json() const {
    return {{"N", N}, {"exact", to_string(exact)}, {"S_T", S_T}, {"J_T", J_T}, {"predicted", predicted}, {"ratio", ratio}};
  }
};

struct Comparison {
  std::vector<CompareRow> rows;
  bool below_threshold = false;
  bool improving = false;  // |ratio - 1| nonincreasing along the rows
  SingularReport series;
  SingularReport integral;
};

/// Exact counts against the predicted main term for each N.
inline Comparison compare(const Lambda& lambda, int d, const std::vector<std::int64_t>& Ns, std::int64_t T, double tol,
                          const TableLimits& limits = {}) {
  const auto P = parabola_system(d);
  const auto lf = parabola_local_factors(lambda, d, T, tol);
  Comparison c;
  c.series = lf.series;
  c.integral = lf.integral;
  for (auto N : Ns) {
    const auto pred = predicted_from(lf, lambda, d, N);
    CompareRow r;
    r.N = N;
    r.exact = count_solutions(P, lambda, N, limits);
    r.S_T = lf.series.value;
    r.J_T = lf.integral.value;
    r.predicted = pred.value;
    r.ratio = static_cast<double>(to_ld(r.exact)) / pred.value;
    c.below_threshold = pred.below_threshold;
    c.rows.push_back(r);
  }
  c.improving = true;
  for (std::size_t i = 1; i < c.rows.size(); ++i)
    if (std::abs(c.rows[i].ratio - 1.0) > std::abs(c.rows[i - 1].ratio - 1.0)) c.improving = false;
  return c;
}

}  // namespace addeq
