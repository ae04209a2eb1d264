#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace addeq {

using i128 = __int128;
using u128 = unsigned __int128;
using BigInt = boost::multiprecision::cpp_int;

/// Raised when an exact integer computation would leave the 128-bit range.
struct OverflowError : std::overflow_error {
  using std::overflow_error::overflow_error;
};

inline i128 checked_add(i128 a, i128 b) {
  i128 r;
  if (__builtin_add_overflow(a, b, &r)) throw OverflowError("i128 addition overflow");
  return r;
}

inline i128 checked_mul(i128 a, i128 b) {
  i128 r;
  if (__builtin_mul_overflow(a, b, &r)) throw OverflowError("i128 multiplication overflow");
  return r;
}

inline i128 checked_pow(i128 base, int exp) {
  i128 r = 1;
  for (int i = 0; i < exp; ++i) r = checked_mul(r, base);
  return r;
}

inline i128 abs128(i128 v) { return v < 0 ? -v : v; }

inline std::string to_string(u128 v) {
  if (v == 0) return "0";
  std::string s;
  while (v != 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return {s.rbegin(), s.rend()};
}

inline std::string to_string(i128 v) {
  if (v < 0) return "-" + to_string(static_cast<u128>(-(v + 1)) + 1);
  return to_string(static_cast<u128>(v));
}

inline BigInt to_big(i128 v) {
  BigInt r = static_cast<std::int64_t>(v >> 64);
  r <<= 64;
  r += static_cast<std::uint64_t>(static_cast<u128>(v) & ~std::uint64_t{0});
  return r;
}

inline BigInt to_big(u128 v) {
  BigInt r = static_cast<std::uint64_t>(v >> 64);
  r <<= 64;
  r += static_cast<std::uint64_t>(v & ~std::uint64_t{0});
  return r;
}

/// Number of bits needed to represent values in [0, span].
inline int bit_width_u128(u128 span) {
  int bits = 0;
  while (span != 0) {
    ++bits;
    span >>= 1;
  }
  return bits;
}

inline long double to_ld(u128 v) { return static_cast<long double>(v); }
inline long double to_ld(i128 v) { return static_cast<long double>(v); }

}  // namespace addeq
