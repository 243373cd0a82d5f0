#pragma once

#include <cstdint>

namespace rnicsim {

// Simulated time in integer nanoseconds. All model arithmetic is integral so
// runs are exactly reproducible across platforms.
using SimTime = std::int64_t;

constexpr SimTime kNanosecond = 1;
constexpr SimTime kMicrosecond = 1000;
constexpr SimTime kMillisecond = 1000 * kMicrosecond;
constexpr SimTime kSecond = 1000 * kMillisecond;

constexpr SimTime us_to_ns(double us) {
  return static_cast<SimTime>(us * 1000.0 + (us >= 0 ? 0.5 : -0.5));
}

constexpr double ns_to_us(SimTime ns) { return static_cast<double>(ns) / 1000.0; }

// Banker-free round-half-up division for non-negative operands.
constexpr std::int64_t round_div(std::int64_t num, std::int64_t den) {
  return (num + den / 2) / den;
}

constexpr std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
  return (num + den - 1) / den;
}

// round_div over a product that may exceed 64 bits (e.g. bytes * 1e9).
inline std::int64_t round_div_u128(std::int64_t a, std::int64_t b, std::int64_t den) {
  __int128 num = static_cast<__int128>(a) * b;
  return static_cast<std::int64_t>((num + den / 2) / den);
}

// 1-indexed rank of the q-quantile among n samples: ceil(q*n), clamped to
// [1, n]. The small guard absorbs float noise when q*n is meant to be whole.
inline std::uint64_t percentile_rank(double q, std::uint64_t n) {
  double r = q * static_cast<double>(n);
  auto rank = static_cast<std::uint64_t>(r - 1e-9) + 1;  // ceil for positive r
  if (r <= 1.0) rank = 1;
  if (rank > n) rank = n;
  return rank;
}

}  // namespace rnicsim
