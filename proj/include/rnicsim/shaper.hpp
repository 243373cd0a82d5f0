#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "rnicsim/control.hpp"
#include "rnicsim/engine.hpp"
#include "rnicsim/rnic.hpp"
#include "rnicsim/time.hpp"

namespace rnicsim {

// How a message is carved into WQEs. Chunks are uniform except the tail.
struct SplitPlan {
  std::int64_t message_bytes = 0;
  std::int64_t chunk = 0;
  std::int64_t n_chunks = 0;
  std::int64_t tail_bytes = 0;  // size of the final chunk

  static SplitPlan make(std::int64_t message_bytes, std::int64_t chunk) {
    if (message_bytes < 1) throw std::invalid_argument("message_bytes must be >= 1");
    if (chunk < 1) throw std::invalid_argument("chunk must be >= 1");
    SplitPlan p;
    p.message_bytes = message_bytes;
    p.chunk = chunk;
    p.n_chunks = ceil_div(message_bytes, chunk);
    p.tail_bytes = message_bytes - (p.n_chunks - 1) * chunk;
    return p;
  }

  std::int64_t chunk_bytes(std::int64_t i) const {
    if (i < 0 || i >= n_chunks) throw std::out_of_range("chunk index out of range");
    return i + 1 == n_chunks ? tail_bytes : chunk;
  }
};

struct ChunkDictEntry {
  std::int64_t with_latency = 5120;
  std::int64_t without = 1'000'000;
};

// Per-application chunk profiles with a catch-all default.
class ChunkDict {
 public:
  explicit ChunkDict(ChunkDictEntry defaults = {}) : defaults_(defaults) {}

  void set_profile(const std::string& profile, ChunkDictEntry entry) {
    profiles_[profile] = entry;
  }

  std::int64_t select(const std::string& profile, bool latency_present) const {
    auto it = profiles_.find(profile);
    const ChunkDictEntry& e = it != profiles_.end() ? it->second : defaults_;
    return latency_present ? e.with_latency : e.without;
  }

 private:
  ChunkDictEntry defaults_;
  std::map<std::string, ChunkDictEntry> profiles_;
};

// Splitting/pacing shaper for one resource-hungry flow. Demand is an
// unbounded stream of msg_bytes messages. Local grants refill expiring
// byte+op credit; a remote share (when the far daemon reports contention,
// i.e. more than one flow in its view) caps the send rate directly.
// Chunk n of a split message is held until chunk n-1 completes.
class Pacer {
 public:
  using PostFn = std::function<void(const Wqe&)>;

  Pacer(Engine& engine, int flow, FlowClass cls, std::int64_t msg_bytes, int batch_size,
        bool local_tokens, std::int64_t max_rate, ChunkDictEntry chunk_defaults)
      : engine_(engine),
        flow_(flow),
        cls_(cls),
        msg_bytes_(msg_bytes),
        batch_size_(batch_size < 1 ? 1 : batch_size),
        local_tokens_(local_tokens),
        max_rate_(max_rate),
        chunk_defaults_(chunk_defaults) {
    if (msg_bytes < 1) throw std::invalid_argument("msg_bytes must be >= 1");
  }

  void set_post_fn(PostFn fn) { post_fn_ = std::move(fn); }

  void start(SimTime now) {
    active_ = true;
    msg_start_ = now;
    try_post();
  }

  void stop() { active_ = false; }
  bool active() const { return active_; }

  void on_grant(const Grant& grant) {
    // credit expires at each grant: assignment, never accumulation
    bytes_credit_ = grant.bytes;
    ops_credit_ = grant.ops;
    grant_rate_ = grant.safe_util;
    grant_chunk_ = grant.chunk;
    alpha_ = grant.alpha;
    has_grant_ = true;
    if (cls_ == FlowClass::throughput) {
      burst_messages();
    } else {
      try_post();
    }
  }

  void on_remote_share(const ShareUpdate& update) {
    if (update.issued_at < last_share_at_ && remote_seen_) return;  // stale: strictly older than last applied
    remote_seen_ = true;
    last_share_at_ = update.issued_at;
    std::int64_t n = update.lat + update.bw + update.tput;
    if (n <= 1) {
      remote_rate_ = max_rate_;  // sole user in the remote view: full rate
    } else {
      remote_rate_ = round_div(max_rate_, n);
      if (remote_rate_ < 1) remote_rate_ = 1;
    }
    remote_chunk_ = update.lat > 0 ? chunk_defaults_.with_latency : chunk_defaults_.without;
    try_post();
  }

  // Completion feedback used to release a held final chunk.
  void on_chunk_acked(std::int64_t message_id) {
    if (message_id == msg_id_) {
      ++msg_acked_;
      try_post();
    }
  }

  std::int64_t remote_rate() const { return remote_rate_; }

  std::int64_t effective_chunk() const {
    if (!local_tokens_) return remote_chunk_ > 0 ? remote_chunk_ : chunk_defaults_.without;
    std::int64_t c = grant_chunk_ > 0 ? grant_chunk_ : chunk_defaults_.without;
    if (remote_rate_ > 0 && remote_chunk_ > 0 && remote_chunk_ < c) c = remote_chunk_;
    return c;
  }

  std::int64_t messages_started() const { return msg_id_; }
  double applied_alpha() const { return alpha_; }

  // Throughput demand arrives in batches; unset means an unbounded backlog.
  // New demand may spend whatever credit is left from the current token.
  void set_pending_messages(std::int64_t n) {
    pending_msgs_ = n;
    if (cls_ == FlowClass::throughput && active_ && has_grant_) burst_messages();
  }
  std::int64_t pending_messages() const { return pending_msgs_; }

 private:
  static constexpr std::int64_t kUnbounded = -1;

  void burst_messages() {
    if (!active_ || !post_fn_) return;
    while (ops_credit_ >= 1 && bytes_credit_ >= msg_bytes_ &&
           (pending_msgs_ == kUnbounded || pending_msgs_ > 0)) {
      Wqe w;
      w.flow = flow_;
      w.bytes = msg_bytes_;
      w.message_id = msg_id_++;
      w.chunk_index = 0;
      w.last_chunk = true;
      w.message_posted_at = engine_.now();
      ops_credit_ -= 1;
      bytes_credit_ -= msg_bytes_;
      if (pending_msgs_ != kUnbounded) --pending_msgs_;
      post_fn_(w);
    }
  }

  void try_post() {
    if (!active_ || !post_fn_ || cls_ == FlowClass::throughput) return;
    while (true) {
      if (local_tokens_ && !has_grant_) return;
      if (!local_tokens_ && !remote_seen_) return;  // rate unknown until first share
      std::int64_t chunk = effective_chunk();
      std::int64_t bytes = std::min(chunk, msg_bytes_ - msg_sent_bytes_);
      bool last = msg_sent_bytes_ + bytes == msg_bytes_;
      if (local_tokens_ && (bytes_credit_ < bytes || ops_credit_ < 1)) return;
      if (last && msg_chunks_posted_ > 0 && msg_acked_ < msg_chunks_posted_) return;
      SimTime now = engine_.now();
      if (next_allowed_ > now) {
        arm_timer(next_allowed_);
        return;
      }
      if (msg_chunks_posted_ == 0) msg_start_ = now;
      Wqe w;
      w.flow = flow_;
      w.bytes = bytes;
      w.message_id = msg_id_;
      w.chunk_index = static_cast<std::int32_t>(msg_chunks_posted_);
      w.last_chunk = last;
      w.message_posted_at = msg_start_;
      if (local_tokens_) {
        bytes_credit_ -= bytes;
        ops_credit_ -= 1;
      }
      msg_sent_bytes_ += bytes;
      ++msg_chunks_posted_;
      next_allowed_ = now + post_gap(chunk, bytes);
      post_fn_(w);
      if (last) {
        ++msg_id_;
        msg_sent_bytes_ = 0;
        msg_chunks_posted_ = 0;
        msg_acked_ = 0;
      }
    }
  }

  // Appendix-style pause after each chunk: alpha * ChunkSize / SafeUtil under
  // local tokens, full wire spacing of the actual bytes under a remote cap.
  // Remote-only flows with an uncontended share still pace at line rate so
  // the post loop stays bounded.
  SimTime post_gap(std::int64_t nominal_chunk, std::int64_t actual_bytes) const {
    SimTime gap = 0;
    if (local_tokens_ && grant_rate_ > 0 && alpha_ > 0.0) {
      double t = alpha_ * static_cast<double>(nominal_chunk) * 1e9 /
                 static_cast<double>(grant_rate_);
      gap = static_cast<SimTime>(t + 0.5);
    }
    std::int64_t cap_rate = remote_rate_;
    if (!local_tokens_ && cap_rate == 0) cap_rate = max_rate_;
    if (cap_rate > 0) {
      SimTime remote_gap = round_div_u128(actual_bytes, kSecond, cap_rate);
      if (remote_gap > gap) gap = remote_gap;
    }
    // Without local credit nothing else bounds the post loop; a sub-clock-tick
    // wire gap (tiny chunks) must still advance time.
    if (!local_tokens_ && gap < 1) gap = 1;
    return gap;
  }

  void arm_timer(SimTime at) {
    if (timer_armed_ && timer_at_ <= at) return;
    if (timer_armed_) engine_.cancel(timer_handle_);
    timer_armed_ = true;
    timer_at_ = at;
    timer_handle_ = engine_.schedule(at, EventKind::pacer_timer, [this] {
      timer_armed_ = false;
      try_post();
    });
  }

  Engine& engine_;
  int flow_;
  FlowClass cls_;
  std::int64_t msg_bytes_;
  int batch_size_;
  bool local_tokens_;
  std::int64_t max_rate_;
  ChunkDictEntry chunk_defaults_;
  PostFn post_fn_;

  bool active_ = false;
  bool has_grant_ = false;
  std::int64_t bytes_credit_ = 0;
  std::int64_t ops_credit_ = 0;
  std::int64_t grant_rate_ = 0;
  std::int64_t grant_chunk_ = 0;
  double alpha_ = 0.0;

  bool remote_seen_ = false;
  SimTime last_share_at_ = -1;
  std::int64_t remote_rate_ = 0;
  std::int64_t remote_chunk_ = 0;

  std::int64_t msg_id_ = 0;
  std::int64_t msg_sent_bytes_ = 0;
  std::int64_t msg_chunks_posted_ = 0;
  std::int64_t msg_acked_ = 0;
  std::int64_t pending_msgs_ = kUnbounded;
  SimTime msg_start_ = 0;
  SimTime next_allowed_ = 0;

  bool timer_armed_ = false;
  SimTime timer_at_ = 0;
  EventHandle timer_handle_ = 0;
};

}  // namespace rnicsim
