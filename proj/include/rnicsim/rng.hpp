#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace rnicsim {

// Deterministic random source. The raw mt19937_64 stream is portable; the
// distribution helpers are hand-rolled because the std::*_distribution
// algorithms are not pinned by the standard and differ across libraries.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, bound) without modulo bias.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) return 0;
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound + 1) % bound;
    std::uint64_t v = engine_();
    while (v > limit) v = engine_();
    return v % bound;
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  // splitmix64, used to derive decorrelated per-entity seeds from one run seed.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, const std::string& tag) {
    std::uint64_t h = seed;
    for (char c : tag) h = mix(h ^ static_cast<std::uint8_t>(c));
    return mix(h);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rnicsim
