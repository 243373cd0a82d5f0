#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "rnicsim/rng.hpp"
#include "rnicsim/time.hpp"

namespace rnicsim {

// Count-min sketch over small integer keys. Point queries never undercount;
// hash collisions can only inflate the estimate (one-sided error).
class CountMinSketch {
 public:
  static constexpr int kWidth = 256;  // power of two, cheap masking
  static constexpr int kDepth = 4;

  explicit CountMinSketch(std::uint64_t seed = 0x5eed) {
    for (int d = 0; d < kDepth; ++d) {
      seeds_[d] = SimRng::mix(seed + static_cast<std::uint64_t>(d) * 0x9e3779b97f4a7c15ULL) | 1;
    }
    clear();
  }

  void update(std::uint64_t key, std::uint32_t count = 1) {
    for (int d = 0; d < kDepth; ++d) rows_[d][slot(d, key)] += count;
    total_ += count;
  }

  std::uint32_t query(std::uint64_t key) const {
    std::uint32_t best = rows_[0][slot(0, key)];
    for (int d = 1; d < kDepth; ++d) {
      std::uint32_t v = rows_[d][slot(d, key)];
      if (v < best) best = v;
    }
    return best;
  }

  std::uint64_t total() const { return total_; }

  void clear() {
    for (auto& row : rows_) row.fill(0);
    total_ = 0;
  }

 private:
  int slot(int d, std::uint64_t key) const {
    // multiply-shift hashing; odd multiplier per row
    return static_cast<int>((key * seeds_[d]) >> 56) & (kWidth - 1);
  }

  std::array<std::array<std::uint32_t, kWidth>, kDepth> rows_;
  std::array<std::uint64_t, kDepth> seeds_;
  std::uint64_t total_ = 0;
};

// Geometric latency buckets: upper edges grow by ~1.1x from 100 ns to 10 ms.
// Edges are built once with integer arithmetic so bucketing is bit-exact.
class LatencyBuckets {
 public:
  static constexpr SimTime kMinNs = 100;
  static constexpr SimTime kMaxNs = 10 * kMillisecond;

  LatencyBuckets() {
    edges_.push_back(kMinNs);
    while (edges_.back() < kMaxNs) {
      SimTime next = (edges_.back() * 11 + 5) / 10;
      if (next <= edges_.back()) next = edges_.back() + 1;
      edges_.push_back(next);
    }
  }

  int count() const { return static_cast<int>(edges_.size()); }

  // Values below the first edge clamp to bucket 0, above the last to the top.
  int bucket_of(SimTime ns) const {
    if (ns <= edges_.front()) return 0;
    if (ns > edges_.back()) return count() - 1;
    int lo = 0, hi = count() - 1;
    while (lo < hi) {
      int mid = (lo + hi) / 2;
      if (edges_[mid] >= ns) hi = mid; else lo = mid + 1;
    }
    return lo;
  }

  SimTime upper_edge(int bucket) const { return edges_[bucket]; }

 private:
  std::vector<SimTime> edges_;
};

// Sliding-window tail estimator: a ring of sub-sketches, each covering
// window/ring_size samples. Expiring the oldest cohort is O(1) sketch drop
// instead of per-sample bookkeeping.
class TailEstimator {
 public:
  static constexpr int kRingSize = 10;

  explicit TailEstimator(int window_samples = 10000, std::uint64_t seed = 0x5eed)
      : capacity_per_sub_((window_samples + kRingSize - 1) / kRingSize) {
    if (window_samples < kRingSize) capacity_per_sub_ = 1;
    for (int i = 0; i < kRingSize; ++i) ring_.emplace_back(SimRng::mix(seed + i));
  }

  void record(SimTime latency_ns) {
    int b = buckets_.bucket_of(latency_ns);
    if (sub_count_[head_] >= capacity_per_sub_) rotate();
    ring_[head_].update(static_cast<std::uint64_t>(b));
    ++sub_count_[head_];
    ++recorded_;
  }

  std::uint64_t window_total() const {
    std::uint64_t n = 0;
    for (int c : sub_count_) n += static_cast<std::uint64_t>(c);
    return n;
  }

  std::uint64_t recorded() const { return recorded_; }

  // Upper edge of the first bucket whose cumulative estimate reaches the
  // requested rank. Overestimates by at most ~one bucket under collisions.
  std::optional<SimTime> current_p99() const { return percentile(0.99); }

  std::optional<SimTime> percentile(double q) const {
    std::uint64_t n = window_total();
    if (n == 0) return std::nullopt;
    std::uint64_t rank = percentile_rank(q, n);
    std::uint64_t cum = 0;
    for (int b = 0; b < buckets_.count(); ++b) {
      std::uint64_t est = 0;
      for (int i = 0; i < kRingSize; ++i) {
        if (sub_count_[i] > 0) est += ring_[i].query(static_cast<std::uint64_t>(b));
      }
      cum += est;
      if (cum >= rank) return buckets_.upper_edge(b);
    }
    return buckets_.upper_edge(buckets_.count() - 1);
  }

  const LatencyBuckets& buckets() const { return buckets_; }

 private:
  void rotate() {
    head_ = (head_ + 1) % kRingSize;
    ring_[head_].clear();
    sub_count_[head_] = 0;
  }

  LatencyBuckets buckets_;
  std::vector<CountMinSketch> ring_;
  std::array<int, kRingSize> sub_count_{};
  int head_ = 0;
  int capacity_per_sub_;
  std::uint64_t recorded_ = 0;
};

}  // namespace rnicsim
