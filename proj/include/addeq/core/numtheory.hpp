#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

namespace addeq {

using cplx = std::complex<double>;

/// e(x) = exp(2 pi i x).
inline cplx e1(double x) {
  const double t = 2.0 * std::numbers::pi * (x - std::floor(x));
  return {std::cos(t), std::sin(t)};
}

inline cplx e1(long double x) {
  const long double f = x - std::floor(x);
  const double t = static_cast<double>(2.0L * std::numbers::pi_v<long double> * f);
  return {std::cos(t), std::sin(t)};
}

inline std::int64_t gcd64(std::int64_t a, std::int64_t b) { return std::gcd(a, b); }

inline std::int64_t mod_floor(std::int64_t a, std::int64_t m) {
  const std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

inline bool is_prime(std::int64_t n) {
  if (n < 2) return false;
  if (n < 4) return true;
  if (n % 2 == 0 || n % 3 == 0) return false;
  for (std::int64_t i = 5; i * i <= n; i += 6)
    if (n % i == 0 || n % (i + 2) == 0) return false;
  return true;
}

/// Smallest prime >= n.
inline std::int64_t next_prime(std::int64_t n) {
  if (n <= 2) return 2;
  while (!is_prime(n)) ++n;
  return n;
}

/// Moebius function for 0..limit (mu[0] unused).
inline std::vector<int> mobius_sieve(int limit) {
  std::vector<int> mu(static_cast<std::size_t>(limit) + 1, 1);
  std::vector<bool> composite(static_cast<std::size_t>(limit) + 1, false);
  std::vector<int> primes;
  if (limit >= 0) mu[0] = 0;
  for (int i = 2; i <= limit; ++i) {
    if (!composite[static_cast<std::size_t>(i)]) {
      primes.push_back(i);
      mu[static_cast<std::size_t>(i)] = -1;
    }
    for (int p : primes) {
      const long long ip = static_cast<long long>(i) * p;
      if (ip > limit) break;
      composite[static_cast<std::size_t>(ip)] = true;
      if (i % p == 0) {
        mu[static_cast<std::size_t>(ip)] = 0;
        break;
      }
      mu[static_cast<std::size_t>(ip)] = -mu[static_cast<std::size_t>(i)];
    }
  }
  return mu;
}

inline std::vector<std::int64_t> divisors(std::int64_t n) {
  std::vector<std::int64_t> small, large;
  for (std::int64_t i = 1; i * i <= n; ++i) {
    if (n % i == 0) {
      small.push_back(i);
      if (i != n / i) large.push_back(n / i);
    }
  }
  small.insert(small.end(), large.rbegin(), large.rend());
  return small;
}

/// Table of the m-th roots of unity, root(t) = e(t/m) for t in [0, m).
class RootTable {
 public:
  RootTable() = default;
  explicit RootTable(std::int64_t m) : m_(m), roots_(static_cast<std::size_t>(m)) {
    for (std::int64_t t = 0; t < m; ++t) {
      const long double ang = 2.0L * std::numbers::pi_v<long double> * static_cast<long double>(t) /
                              static_cast<long double>(m);
      roots_[static_cast<std::size_t>(t)] = {static_cast<double>(std::cos(ang)),
                                             static_cast<double>(std::sin(ang))};
    }
  }
  std::int64_t modulus() const noexcept { return m_; }
  const cplx& operator[](std::int64_t t) const { return roots_[static_cast<std::size_t>(t)]; }
  /// e(t/m) for arbitrary integer t.
  const cplx& at(std::int64_t t) const { return roots_[static_cast<std::size_t>(mod_floor(t, m_))]; }

 private:
  std::int64_t m_ = 1;
  std::vector<cplx> roots_;
};

/// Distance to the nearest integer.
inline double torus_norm(double x) {
  const double f = x - std::floor(x);
  return f > 0.5 ? 1.0 - f : f;
}

inline long double torus_norm(long double x) {
  const long double f = x - std::floor(x);
  return f > 0.5L ? 1.0L - f : f;
}

}  // namespace addeq
