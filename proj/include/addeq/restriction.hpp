#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "addeq/core/errors.hpp"
#include "addeq/core/kahan.hpp"
#include "addeq/core/numtheory.hpp"
#include "addeq/core/parallel.hpp"
#include "addeq/expsums.hpp"
#include "addeq/localfactors.hpp"
#include "addeq/quadrature.hpp"

namespace addeq {

/// Largest grid (in points) the restriction scans will materialize.
inline constexpr std::size_t kCurveGridCap = std::size_t{1} << 25;

inline double curve_weight_K(int k) { return k * (k + 1) / 2.0; }

/// Grid (N, N^2, ..., N^k).
inline TorusGrid natural_grid(int k, std::int64_t N) {
  TorusGrid g;
  std::int64_t m = 1;
  for (int j = 0; j < k; ++j) g.res.push_back(m *= N);
  return g;
}

/// Grid with resolution 2 N^j + 1 in coordinate j, exact for products of two curve sums.
inline TorusGrid convolution_grid(int k, std::int64_t N) {
  TorusGrid g;
  std::int64_t m = 1;
  for (int j = 0; j < k; ++j) {
    m *= N;
    g.res.push_back(2 * m + 1);
  }
  return g;
}

namespace detail {

// Slices per parallel chunk in curve_slices; callers may keep per-chunk state indexed by slice / kSliceChunk.
inline constexpr std::size_t kSliceChunk = 256;

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Backward (exp(+2 pi i)) complex DFT of length m, reusable across threads.
class DftPlan {
 public:
  explicit DftPlan(std::int64_t m) : m_(m) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    auto* in = fftw_alloc_complex(static_cast<std::size_t>(m));
    auto* out = fftw_alloc_complex(static_cast<std::size_t>(m));
    plan_ = fftw_plan_dft_1d(static_cast<int>(m), in, out, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (!plan_) throw std::runtime_error("fftw: plan creation failed");
  }
  DftPlan(const DftPlan&) = delete;
  DftPlan& operator=(const DftPlan&) = delete;
  ~DftPlan() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  void run(cplx* in, cplx* out) const {
    fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(in), reinterpret_cast<fftw_complex*>(out));
  }
  std::int64_t size() const { return m_; }

 private:
  std::int64_t m_;
  fftw_plan plan_;
};

// n^j mod m_j for n = 1..N, j = 1..k.
inline std::vector<std::vector<std::int64_t>> curve_powers(int k, std::int64_t N, const TorusGrid& grid) {
  std::vector<std::vector<std::int64_t>> pw(static_cast<std::size_t>(k), std::vector<std::int64_t>(static_cast<std::size_t>(N) + 1));
  for (int j = 0; j < k; ++j) {
    const auto m = static_cast<u128>(grid.res[static_cast<std::size_t>(j)]);
    for (std::int64_t n = 1; n <= N; ++n) {
      u128 v = 1;
      for (int e = 0; e <= j; ++e) v = (v * static_cast<u128>(n)) % m;
      pw[static_cast<std::size_t>(j)][static_cast<std::size_t>(n)] = static_cast<std::int64_t>(v);
    }
  }
  return pw;
}

inline void check_curve_grid(int k, const TorusGrid& grid) {
  if (k < 1) throw std::invalid_argument("restriction: k must be >= 1");
  if (grid.res.size() != static_cast<std::size_t>(k)) throw std::invalid_argument("restriction: grid must have k resolutions");
  for (auto m : grid.res)
    if (m < 1) throw std::invalid_argument("restriction: grid resolutions must be positive");
}

/// Visit F_g on the grid slice by slice. A slice fixes (t_2, ..., t_k) and holds the m_1 values
/// F_g(t_1/m_1, t_2/m_2, ...), obtained by one DFT along the first coordinate.
/// fn(slice, values) is called with slice in [0, prod_{j>=2} m_j); the flat index of a point is t_1 + m_1 * slice.
template <class Fn>
void curve_slices(int k, const WeightFn& g, const TorusGrid& grid, Fn&& fn, double scale = 1.0) {
  check_curve_grid(k, grid);
  if (g.dimension() != 1) throw std::invalid_argument("restriction: weight must live on [N]");
  const std::int64_t N = g.N();
  const auto m1 = grid.res[0];
  std::size_t slices = 1;
  for (int j = 1; j < k; ++j) slices *= static_cast<std::size_t>(grid.res[static_cast<std::size_t>(j)]);
  const auto pw = curve_powers(k, N, grid);
  std::vector<RootTable> roots;
  for (int j = 1; j < k; ++j) roots.emplace_back(grid.res[static_cast<std::size_t>(j)]);
  const DftPlan plan(m1);
  std::vector<std::int64_t> first_pos(static_cast<std::size_t>(N) + 1);
  for (std::int64_t n = 1; n <= N; ++n) first_pos[static_cast<std::size_t>(n)] = n % m1;
  parallel_chunks(slices, kSliceChunk, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<cplx> in(static_cast<std::size_t>(m1)), out(static_cast<std::size_t>(m1));
    std::vector<std::int64_t> t(static_cast<std::size_t>(k), 0);
    for (std::size_t s = b; s < e; ++s) {
      std::size_t rest = s;
      for (int j = 1; j < k; ++j) {
        const auto mj = static_cast<std::size_t>(grid.res[static_cast<std::size_t>(j)]);
        t[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(rest % mj);
        rest /= mj;
      }
      std::fill(in.begin(), in.end(), cplx{});
      for (std::int64_t n = 1; n <= N; ++n) {
        cplx ph = g[static_cast<std::size_t>(n - 1)] * scale;
        for (int j = 1; j < k; ++j) {
          const auto mj = static_cast<u128>(grid.res[static_cast<std::size_t>(j)]);
          const auto idx = static_cast<std::int64_t>(
              (static_cast<u128>(t[static_cast<std::size_t>(j)]) *
               static_cast<u128>(pw[static_cast<std::size_t>(j)][static_cast<std::size_t>(n)])) % mj);
          ph *= roots[static_cast<std::size_t>(j - 1)][idx];
        }
        in[static_cast<std::size_t>(first_pos[static_cast<std::size_t>(n)])] += ph;
      }
      plan.run(in.data(), out.data());
      fn(s, out.data());
    }
  });
}

inline std::size_t checked_grid_size(const TorusGrid& grid) {
  long double total = 1;
  for (auto m : grid.res) total *= static_cast<long double>(m);
  if (total > static_cast<long double>(kCurveGridCap))
    throw GuardError("restriction.grid", "grid of " + std::to_string(static_cast<double>(total)) + " points exceeds 2^25");
  return static_cast<std::size_t>(total);
}

// Weight scaled to unit l2 norm.
inline double unit_scale(const WeightFn& g) {
  if (!(g.l2() > 0)) throw std::invalid_argument("restriction: weight must be nonzero");
  return 1.0 / g.l2();
}

// Relative slack for comparisons |F| >= eta sqrt(N) at level-set boundaries.
inline constexpr double kLevelSlack = 1e-12;

}  // namespace detail

/// F_g(alpha) = sum_n g(n) e(alpha_1 n + ... + alpha_k n^k) at one point.
inline cplx curve_sum(const WeightFn& g, const std::vector<double>& alpha) {
  ComplexCompensatedSum sum;
  for (std::int64_t n = 1; n <= g.N(); ++n) {
    long double ph = 0.0L, np = 1.0L;
    for (double a : alpha) {
      np *= static_cast<long double>(n);
      const long double v = static_cast<long double>(a) * np;
      ph += v - std::floor(v);
    }
    sum.add(g[static_cast<std::size_t>(n - 1)] * e1(ph));
  }
  return sum.value();
}

// ---------------------------------------------------------------------------
// Level sets

/// Sorted values |F_g| / sqrt(N) over the grid, with g scaled to unit l2 norm.
inline std::vector<double> normalized_levels(int k, const WeightFn& g, const TorusGrid& grid) {
  const auto total = detail::checked_grid_size(grid);
  std::vector<double> v(total);
  const auto m1 = static_cast<std::size_t>(grid.res[0]);
  const double inv = 1.0 / std::sqrt(static_cast<double>(g.N()));
  detail::curve_slices(
      k, g, grid,
      [&](std::size_t s, const cplx* vals) {
        for (std::size_t t = 0; t < m1; ++t) v[s * m1 + t] = std::abs(vals[t]) * inv;
      },
      detail::unit_scale(g));
  std::sort(v.begin(), v.end());
  return v;
}

/// |E_eta| from sorted levels.
inline double measure_from_levels(const std::vector<double>& levels, double eta) {
  const double cut = eta * (1.0 - detail::kLevelSlack);
  const auto it = std::lower_bound(levels.begin(), levels.end(), cut);
  return static_cast<double>(levels.end() - it) / static_cast<double>(levels.size());
}

/// Fraction of grid points with |F_g| >= eta sqrt(N), g scaled to unit l2 norm.
inline double level_set_measure(int k, const WeightFn& g, double eta, const TorusGrid& grid) {
  if (eta <= 0) return 1.0;
  return measure_from_levels(normalized_levels(k, g, grid), eta);
}

/// eta nodes: `linear` uniform steps on [0, N^{-1/2}] and `geometric` steps on [N^{-1/2}, 1].
inline std::vector<double> eta_ledger(std::int64_t N, int linear = 64, int geometric = 256) {
  const double lo = 1.0 / std::sqrt(static_cast<double>(N));
  std::vector<double> nodes;
  for (int i = 0; i < linear; ++i) nodes.push_back(lo * i / linear);
  const double r = std::pow(1.0 / lo, 1.0 / geometric);
  double x = lo;
  for (int i = 0; i < geometric; ++i, x *= r) nodes.push_back(x);
  nodes.push_back(1.0);
  return nodes;
}

struct LevelSetReport {
  int k = 0;
  std::int64_t N = 0;
  TorusGrid grid;
  std::vector<double> etas;
  std::vector<double> measures;
  bool normalized = false;  // the input weight did not have unit l2 norm and was rescaled

  nlohmann::json to_json() const {
    return {{"k", k}, {"N", N}, {"grid", grid.res}, {"normalized", normalized}, {"eta", etas}, {"measure", measures}};
  }
  std::string csv() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    os << "eta,measure\n";
    for (std::size_t i = 0; i < etas.size(); ++i) os << etas[i] << "," << measures[i] << "\n";
    return os.str();
  }
};

inline LevelSetReport level_sets(int k, const WeightFn& g, const std::vector<double>& etas, const TorusGrid& grid) {
  const auto levels = normalized_levels(k, g, grid);
  LevelSetReport r;
  r.k = k;
  r.N = g.N();
  r.grid = grid;
  r.etas = etas;
  r.normalized = std::abs(g.l2() - 1.0) > 1e-12;
  for (double eta : etas) r.measures.push_back(eta <= 0 ? 1.0 : measure_from_levels(levels, eta));
  return r;
}

struct MomentComparison {
  double via_levelsets = 0.0;
  double direct = 0.0;
  double rel_diff = 0.0;
};

/// p N^{p/2} \int_a^b eta^{p-1} |E_eta| d eta by the trapezoid rule on the eta ledger (with exact
/// weights for eta^{p-1}), against the grid average of N^{p/2} [min(|F|/sqrt N, b)^p - a^p]_+.
inline MomentComparison moments_via_levelsets(int k, const WeightFn& g, double p, double a, double b, const TorusGrid& grid) {
  if (!(a >= 0 && a <= b && b <= 1)) throw std::invalid_argument("moments_via_levelsets: need 0 <= a <= b <= 1");
  if (!(p > 0)) throw std::invalid_argument("moments_via_levelsets: p must be positive");
  MomentComparison out;
  if (a == b) return out;
  const auto levels = normalized_levels(k, g, grid);
  const double Np = std::pow(static_cast<double>(g.N()), p / 2.0);

  std::vector<double> nodes{a};
  for (double x : eta_ledger(g.N()))
    if (x > a && x < b) nodes.push_back(x);
  nodes.push_back(b);
  auto meas = [&](double eta) { return eta <= 0 ? 1.0 : measure_from_levels(levels, eta); };
  CompensatedSum acc;
  double prev_m = meas(nodes[0]);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double next_m = meas(nodes[i + 1]);
    acc.add((std::pow(nodes[i + 1], p) - std::pow(nodes[i], p)) * 0.5 * (prev_m + next_m));
    prev_m = next_m;
  }
  out.via_levelsets = Np * acc.value();

  CompensatedSum direct;
  const double ap = std::pow(a, p);
  for (double v : levels) {
    const double c = std::pow(std::min(v, b), p) - ap;
    if (c > 0) direct.add(c);
  }
  out.direct = Np * direct.value() / static_cast<double>(levels.size());
  out.rel_diff = out.direct != 0 ? std::abs(out.via_levelsets - out.direct) / std::abs(out.direct) : std::abs(out.via_levelsets);
  return out;
}

// ---------------------------------------------------------------------------
// Tomas-Stein

struct TomasSteinResult {
  double eta = 0.0;
  double measure = 0.0;
  double lhs = 0.0;  // eta^2 N |E|^2
  double rhs = 0.0;  // <f0 * F, f0> = sum_n |hat f0(gamma(n))|^2
  bool holds = false;

  nlohmann::json to_json() const {
    return {{"eta", eta}, {"measure", measure}, {"lhs", lhs}, {"rhs", rhs}, {"holds", holds}};
  }
};

/// eta^2 N |E_eta|^2 <= <f0 * F, f0> with f0 = 1_E F_g / |F_g| on a grid exact for convolutions
/// (resolution >= 2 N^j + 1 in coordinate j). The weight is scaled to unit l2 norm.
inline std::vector<TomasSteinResult> tomas_stein_check(int k, const WeightFn& g, const std::vector<double>& etas,
                                                       const TorusGrid& grid) {
  detail::check_curve_grid(k, grid);
  const std::int64_t N = g.N();
  const auto need = convolution_grid(k, N);
  for (int j = 0; j < k; ++j)
    if (grid.res[static_cast<std::size_t>(j)] < need.res[static_cast<std::size_t>(j)])
      throw GuardError("restriction.grid", "grid resolution " + std::to_string(grid.res[static_cast<std::size_t>(j)]) +
                                               " below 2N^" + std::to_string(j + 1) + "+1");
  const auto total = detail::checked_grid_size(grid);
  std::vector<cplx> F(total);
  const auto m1 = static_cast<std::size_t>(grid.res[0]);
  detail::curve_slices(
      k, g, grid, [&](std::size_t s, const cplx* vals) { std::copy(vals, vals + m1, F.begin() + static_cast<std::ptrdiff_t>(s * m1)); },
      detail::unit_scale(g));

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(F[x]) > std::abs(F[y]); });

  std::vector<std::size_t> eta_order(etas.size());
  std::iota(eta_order.begin(), eta_order.end(), std::size_t{0});
  std::stable_sort(eta_order.begin(), eta_order.end(), [&](std::size_t x, std::size_t y) { return etas[x] > etas[y]; });

  const auto pw = detail::curve_powers(k, N, grid);
  std::vector<RootTable> roots;
  for (auto m : grid.res) roots.emplace_back(m);
  std::vector<ComplexCompensatedSum> h(static_cast<std::size_t>(N));
  std::vector<std::int64_t> t(static_cast<std::size_t>(k));
  const double sqrtN = std::sqrt(static_cast<double>(N));
  const double G = static_cast<double>(total);
  std::vector<TomasSteinResult> out(etas.size());
  std::size_t pos = 0;
  for (auto ei : eta_order) {
    const double eta = etas[ei];
    const double cut = eta * sqrtN * (1.0 - detail::kLevelSlack);
    while (pos < total && std::abs(F[order[pos]]) >= cut) {
      const std::size_t idx = order[pos++];
      const double mag = std::abs(F[idx]);
      if (mag == 0.0) continue;
      const cplx u = F[idx] / mag;
      std::size_t rest = idx;
      for (int j = 0; j < k; ++j) {
        const auto mj = static_cast<std::size_t>(grid.res[static_cast<std::size_t>(j)]);
        t[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(rest % mj);
        rest /= mj;
      }
      for (std::int64_t n = 1; n <= N; ++n) {
        cplx ph = u;
        for (int j = 0; j < k; ++j) {
          const auto mj = static_cast<u128>(grid.res[static_cast<std::size_t>(j)]);
          const auto r = static_cast<std::int64_t>(
              (static_cast<u128>(t[static_cast<std::size_t>(j)]) * static_cast<u128>(pw[static_cast<std::size_t>(j)][static_cast<std::size_t>(n)])) % mj);
          ph *= std::conj(roots[static_cast<std::size_t>(j)][r]);
        }
        h[static_cast<std::size_t>(n - 1)].add(ph);
      }
    }
    TomasSteinResult r;
    r.eta = eta;
    r.measure = static_cast<double>(pos) / G;
    r.lhs = eta * eta * static_cast<double>(N) * r.measure * r.measure;
    CompensatedSum rhs;
    for (const auto& hn : h) rhs.add(std::norm(hn.value() / G));
    r.rhs = rhs.value();
    r.holds = r.lhs <= r.rhs + 1e-9 * std::max(1.0, r.rhs);
    out[ei] = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Majorant

struct MajorantParams {
  int k = 3;
  std::int64_t N = 1;
  double p = 2.0;
  double tau = 0.0;
  double eps0 = 0.0;
  double delta = 0.0;  // arcs |alpha_j - a_j/q| <= q^{-1} N^{delta - j} for q <= N^delta

  bool disjoint() const { return 2.0 * std::pow(static_cast<double>(N), 2.0 * delta - 1.0) < 1.0; }

  nlohmann::json to_json() const {
    return {{"k", k}, {"N", N}, {"p", p}, {"tau", tau}, {"eps0", eps0}, {"delta", delta}, {"disjoint", disjoint()}};
  }
};

/// tau = 1/6 for k = 3 and max(2^{1-k}, 1 / (4 s_{k-1})) with s_{k-1} = (k-1)k/2 for k >= 4.
inline double default_tau(int k) {
  if (k < 3) throw std::invalid_argument("default_tau: defined for k >= 3");
  if (k == 3) return 1.0 / 6.0;
  return std::max(std::pow(2.0, 1.0 - k), 1.0 / (4.0 * (k - 1) * k / 2.0));
}

/// theta = 1/12 for k = 3 and max(2^{-k}, 1 / (8 s_{k-1})) for k >= 4.
inline double default_theta(int k) { return default_tau(k) / 2.0; }

/// delta = k (tau - eps0) unless given explicitly; delta must be below 1/2.
inline MajorantParams majorant_params(int k, std::int64_t N, double p, double eps0 = 0.01,
                                      std::optional<double> delta = std::nullopt) {
  if (N < 1) throw std::invalid_argument("majorant_params: N must be >= 1");
  MajorantParams m;
  m.k = k;
  m.N = N;
  m.p = p;
  m.eps0 = eps0;
  if (delta) {
    m.delta = *delta;
    m.tau = k >= 3 ? default_tau(k) : 0.0;
  } else {
    m.tau = default_tau(k);
    m.delta = k * (m.tau - eps0);
  }
  if (!(m.delta > 0 && m.delta < 0.5)) throw std::invalid_argument("majorant_params: delta must lie in (0, 1/2)");
  return m;
}

struct MajorantArc {
  bool on_arc = false;
  std::int64_t q = 0;
  std::vector<std::int64_t> a;
  std::vector<double> beta;  // alpha - a/q, signed
};

/// Every arc (a, q) containing alpha, in increasing q. At desk-scale N the arcs need not be
/// disjoint: separation in the first coordinate needs 2 N^{2 delta - 1} < 1.
inline std::vector<MajorantArc> majorant_arcs(const std::vector<double>& alpha, const MajorantParams& m) {
  if (alpha.size() != static_cast<std::size_t>(m.k)) throw std::invalid_argument("majorant: point must have k coordinates");
  const auto pt = torus_reduce(alpha);
  const long double Nl = static_cast<long double>(m.N);
  const auto qmax = static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(m.N), m.delta) + 1e-12));
  std::vector<MajorantArc> out;
  for (std::int64_t q = 1; q <= qmax; ++q) {
    const long double ql = static_cast<long double>(q);
    MajorantArc arc;
    arc.q = q;
    bool ok = true;
    std::int64_t g = q;
    for (int j = 0; j < m.k && ok; ++j) {
      const long double x = pt[static_cast<std::size_t>(j)];
      const long double r = std::round(ql * x);
      const long double b = x - r / ql;
      const long double w = std::pow(Nl, static_cast<long double>(m.delta) - (j + 1)) / ql;
      if (std::abs(b) > w) ok = false;
      const auto aj = mod_floor(static_cast<std::int64_t>(r), q);
      arc.a.push_back(aj);
      arc.beta.push_back(static_cast<double>(b));
      g = std::gcd(g, aj);
    }
    if (!ok || g != 1) continue;
    arc.on_arc = true;
    out.push_back(arc);
  }
  return out;
}

/// The arc of smallest q containing alpha, if any.
inline MajorantArc majorant_arc(const std::vector<double>& alpha, const MajorantParams& m) {
  auto arcs = majorant_arcs(alpha, m);
  return arcs.empty() ? MajorantArc{} : arcs.front();
}

namespace detail {
inline double majorant_on_arc(const MajorantArc& arc, const MajorantParams& m) {
  const double S = std::abs(curve_gauss_sum(arc.a, arc.q)) / static_cast<double>(arc.q);
  if (S == 0.0) return 0.0;
  const double n = static_cast<double>(m.N);
  const double I = std::abs(osc_integral_curve(arc.beta, n, 1e-11 * n).value);
  return std::pow(S * I, m.p);
}
}  // namespace detail

/// U_p(alpha) = sum over arcs containing alpha of |q^{-1} S(a, q)|^p |I(alpha - a/q; N)|^p.
inline double majorant_U(const std::vector<double>& alpha, const MajorantParams& m) {
  double u = 0.0;
  for (const auto& arc : majorant_arcs(alpha, m)) u += detail::majorant_on_arc(arc, m);
  return u;
}

struct MajorantBound {
  double bound = 0.0;
  double series = 0.0;
  double integral = 0.0;
  bool below_threshold = false;  // p <= K + 2
  std::int64_t T = 0;

  nlohmann::json to_json() const {
    return {{"bound", bound}, {"series", series}, {"integral", integral}, {"below_threshold", below_threshold}, {"T", T}};
  }
};

/// S_p(T) J_p(T) N^{p - K}.
inline MajorantBound majorant_L1_bound(double p, int k, std::int64_t N, std::int64_t T, double tol = 1e-6) {
  const auto tm = tarry_moments(k, p, T, static_cast<double>(T), tol);
  MajorantBound b;
  b.series = tm.series.value;
  b.integral = tm.integral;
  b.T = T;
  b.bound = b.series * b.integral * std::pow(static_cast<double>(N), p - curve_weight_K(k));
  b.below_threshold = !tm.series_converges || !tm.integral_converges;
  return b;
}

/// \int U_p over the torus: each arc box integrated by the midpoint rule with `points` nodes per coordinate.
inline double majorant_integral(const MajorantParams& m, int points = 32) {
  const auto qmax = static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(m.N), m.delta) + 1e-12));
  const double n = static_cast<double>(m.N);
  CompensatedSum total;
  for (std::int64_t q = 1; q <= qmax; ++q) {
    CompensatedSum arith;
    std::vector<std::int64_t> a(static_cast<std::size_t>(m.k), 0);
    std::int64_t count = 1;
    for (int j = 0; j < m.k; ++j) count *= q;
    for (std::int64_t t = 0; t < count; ++t) {
      std::int64_t g = q;
      for (auto x : a) g = std::gcd(g, x);
      if (g == 1) arith.add(std::pow(std::abs(curve_gauss_sum(a, q)) / static_cast<double>(q), m.p));
      for (int j = m.k - 1; j >= 0; --j) {
        if (++a[static_cast<std::size_t>(j)] < q) break;
        a[static_cast<std::size_t>(j)] = 0;
      }
    }
    if (arith.value() == 0.0) continue;
    std::vector<double> w(static_cast<std::size_t>(m.k));
    double vol = 1.0;
    for (int j = 0; j < m.k; ++j) {
      w[static_cast<std::size_t>(j)] = std::pow(n, m.delta - (j + 1)) / static_cast<double>(q);
      vol *= 2.0 * w[static_cast<std::size_t>(j)] / points;
    }
    std::size_t cells = 1;
    for (int j = 0; j < m.k; ++j) cells *= static_cast<std::size_t>(points);
    std::vector<double> vals(cells);
    parallel_chunks(cells, 64, [&](std::size_t, std::size_t b, std::size_t e) {
      std::vector<double> beta(static_cast<std::size_t>(m.k));
      for (std::size_t c = b; c < e; ++c) {
        std::size_t rest = c;
        for (int j = 0; j < m.k; ++j) {
          const auto i = static_cast<double>(rest % static_cast<std::size_t>(points));
          rest /= static_cast<std::size_t>(points);
          beta[static_cast<std::size_t>(j)] = -w[static_cast<std::size_t>(j)] + (i + 0.5) * 2.0 * w[static_cast<std::size_t>(j)] / points;
        }
        vals[c] = std::pow(std::abs(osc_integral_curve(beta, n, 1e-11 * n).value), m.p);
      }
    });
    CompensatedSum arch;
    for (double v : vals) arch.add(v);
    total.add(arith.value() * arch.value() * vol);
  }
  return total.value();
}

struct MajorantScan {
  std::size_t samples = 0;
  std::size_t dominated = 0;       // |F|^p <= U_p
  double max_deviation = 0.0;      // max | |F| - U_p^{1/p} |, the measured size of F - F_1
  double max_deviation_over_N = 0.0;

  nlohmann::json to_json() const {
    return {{"samples", samples}, {"dominated", dominated}, {"max_deviation", max_deviation},
            {"max_deviation_over_N", max_deviation_over_N}};
  }
};

/// Compare the unweighted curve sum with U_p at seeded points drawn inside random arcs.
inline MajorantScan majorant_scan(const MajorantParams& m, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const auto qmax = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(m.N), m.delta) + 1e-12)));
  const auto ones = WeightFn::constant(1, m.N, 1.0);
  std::vector<std::vector<double>> pts;
  while (pts.size() < samples) {
    const auto q = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(qmax)) + 1;
    std::vector<double> x(static_cast<std::size_t>(m.k));
    for (int j = 0; j < m.k; ++j) {
      const auto a = static_cast<double>(rng() % static_cast<std::uint64_t>(q));
      x[static_cast<std::size_t>(j)] = a / q + unif(rng) * std::pow(static_cast<double>(m.N), m.delta - (j + 1)) / q;
    }
    pts.push_back(torus_reduce(x));
  }
  std::vector<double> dev(samples);
  std::vector<char> dom(samples);
  parallel_chunks(samples, 8, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double F = std::abs(curve_sum(ones, pts[i]));
      const double U = majorant_U(pts[i], m);
      dev[i] = std::abs(F - std::pow(U, 1.0 / m.p));
      dom[i] = std::pow(F, m.p) <= U;
    }
  });
  MajorantScan s;
  s.samples = samples;
  for (std::size_t i = 0; i < samples; ++i) {
    s.dominated += dom[i] ? 1 : 0;
    s.max_deviation = std::max(s.max_deviation, dev[i]);
  }
  s.max_deviation_over_N = s.max_deviation / static_cast<double>(m.N);
  return s;
}

// ---------------------------------------------------------------------------
// Truncated moments

struct TruncatedMoment {
  int k = 0;
  std::int64_t N = 0;
  double p = 0.0, theta = 0.0, eps = 0.0;
  double threshold = 0.0;  // N^{1/2 - theta + eps} ||g||_2
  double lhs = 0.0;
  double reference = 0.0;  // N^{p/2 - K} ||g||_2^p
  double ratio = 0.0;
  double measure = 0.0;    // fraction of the grid above the threshold
  bool theorem_range = false;  // p > 2K + 4

  nlohmann::json to_json() const {
    return {{"k", k},         {"N", N},           {"p", p},         {"theta", theta},
            {"eps", eps},     {"threshold", threshold},             {"lhs", lhs},
            {"reference", reference},             {"ratio", ratio}, {"measure", measure},
            {"theorem_range", theorem_range}};
  }
};

/// Grid average of |F_g|^p over {|F_g| >= N^{1/2 - theta + eps} ||g||_2}.
/// The grid is not materialized, so it may exceed kCurveGridCap.
inline TruncatedMoment truncated_moment_check(int k, const WeightFn& g, double p, double theta, double eps,
                                              const TorusGrid& grid) {
  detail::check_curve_grid(k, grid);
  TruncatedMoment r;
  r.k = k;
  r.N = g.N();
  r.p = p;
  r.theta = theta;
  r.eps = eps;
  const double n = static_cast<double>(g.N());
  const double K = curve_weight_K(k);
  r.threshold = std::pow(n, 0.5 - theta + eps) * g.l2();
  r.reference = std::pow(n, p / 2.0 - K) * std::pow(g.l2(), p);
  r.theorem_range = p > 2.0 * K + 4.0;
  const double cut2 = r.threshold * r.threshold;
  const auto m1 = static_cast<std::size_t>(grid.res[0]);
  std::size_t slices = 1;
  for (std::size_t j = 1; j < grid.res.size(); ++j) slices *= static_cast<std::size_t>(grid.res[j]);
  // Per-chunk partials merged in chunk order.
  constexpr std::size_t chunk = detail::kSliceChunk;
  std::vector<double> part(chunk_count(slices, chunk), 0.0);
  std::vector<std::size_t> hits(part.size(), 0);
  const bool integer_power = p == std::floor(p) && p >= 0 && p <= 64 && static_cast<long>(p) % 2 == 0;
  detail::curve_slices(k, g, grid, [&](std::size_t s, const cplx* vals) {
    const std::size_t c = s / chunk;
    for (std::size_t t = 0; t < m1; ++t) {
      const double a2 = std::norm(vals[t]);
      if (a2 < cut2) continue;
      double v;
      if (integer_power) {
        v = 1.0;
        for (long e = 0; e < static_cast<long>(p) / 2; ++e) v *= a2;
      } else {
        v = std::pow(a2, p / 2.0);
      }
      part[c] += v;
      ++hits[c];
    }
  });
  CompensatedSum acc;
  std::size_t count = 0;
  for (std::size_t c = 0; c < part.size(); ++c) {
    acc.add(part[c]);
    count += hits[c];
  }
  const double G = static_cast<double>(m1) * static_cast<double>(slices);
  r.lhs = acc.value() / G;
  r.measure = static_cast<double>(count) / G;
  r.ratio = r.lhs / r.reference;
  return r;
}

}  // namespace addeq
