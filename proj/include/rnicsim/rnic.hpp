#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

#include "rnicsim/engine.hpp"
#include "rnicsim/time.hpp"

namespace rnicsim {

// Static NIC parameters. Rates are bytes/s and verbs ops/s; delays are ns.
struct RnicConfig {
  std::int64_t line_rate_bps = 6'000'000'000;   // bytes per second
  std::int64_t max_tput_ops = 30'000'000;       // WQE executions per second
  SimTime propagation_delay = 0;                // one-way host-to-host
  SimTime completion_notify_delay = 1 * kMicrosecond;  // event-triggered polling only
};

enum class PollingMode : std::uint8_t { busy, event_triggered };

struct Wqe {
  int flow = -1;          // owning flow index (simulation-level routing)
  int qp = -1;            // filled by post()
  std::int64_t bytes = 0;
  std::int64_t message_id = 0;
  std::int32_t chunk_index = 0;
  bool last_chunk = true;          // completion of this WQE completes the message
  SimTime message_posted_at = 0;   // first chunk post time, for end-to-end latency
  bool read_request = false;       // verb carrying a READ size, not payload
  std::int64_t read_bytes = 0;     // bytes the responder will send back
};

// Wire occupancy of `bytes` at `rate` bytes/s, in ns.
inline SimTime wire_time(std::int64_t bytes, std::int64_t rate) {
  return round_div_u128(bytes, kSecond, rate);
}

// One WQE costs a fixed execution slot plus wire time, floor 1 ns.
inline SimTime service_time(std::int64_t bytes, const RnicConfig& cfg) {
  SimTime t = round_div(kSecond, cfg.max_tput_ops) + wire_time(bytes, cfg.line_rate_bps);
  return t < 1 ? 1 : t;
}

// Transmit side of one RNIC: a single non-preemptive server draining per-QP
// FIFOs in round-robin order at WQE granularity. Always work conserving; a
// long WQE in service blocks everything behind it (head-of-line).
class SendEngine {
 public:
  SendEngine(Engine& engine, const RnicConfig& cfg) : engine_(engine), cfg_(cfg) {}

  int add_qp() {
    qps_.emplace_back();
    return static_cast<int>(qps_.size()) - 1;
  }

  using SentSink = std::function<void(const Wqe&, SimTime send_end)>;
  void set_sent_sink(SentSink sink) { sink_ = std::move(sink); }

  void post(int qp, Wqe wqe) {
    if (qp < 0 || qp >= static_cast<int>(qps_.size())) {
      throw std::out_of_range("post to unknown qp " + std::to_string(qp));
    }
    wqe.qp = qp;
    qps_[qp].fifo.push_back(std::move(wqe));
    ++pending_;
    if (!busy_) start_next();
  }

  bool busy() const { return busy_; }
  std::size_t pending() const { return pending_; }
  std::size_t queue_depth(int qp) const { return qps_[qp].fifo.size(); }
  const RnicConfig& config() const { return cfg_; }
  std::int64_t bytes_sent() const { return bytes_sent_; }
  std::int64_t wqes_sent() const { return wqes_sent_; }

 private:
  struct QueuePair {
    std::deque<Wqe> fifo;
  };

  void start_next() {
    int n = static_cast<int>(qps_.size());
    for (int step = 1; step <= n; ++step) {
      int qp = (rr_cursor_ + step) % n;
      if (qps_[qp].fifo.empty()) continue;
      rr_cursor_ = qp;
      busy_ = true;
      Wqe wqe = std::move(qps_[qp].fifo.front());
      qps_[qp].fifo.pop_front();
      --pending_;
      SimTime end = engine_.now() + service_time(wqe.bytes, cfg_);
      engine_.schedule(end, EventKind::service_complete, [this, wqe = std::move(wqe), end] {
        bytes_sent_ += wqe.bytes;
        ++wqes_sent_;
        busy_ = false;
        if (pending_ > 0) start_next();
        if (sink_) sink_(wqe, end);
      });
      return;
    }
    busy_ = false;
  }

  Engine& engine_;
  RnicConfig cfg_;
  std::vector<QueuePair> qps_;
  SentSink sink_;
  int rr_cursor_ = -1;
  bool busy_ = false;
  std::size_t pending_ = 0;
  std::int64_t bytes_sent_ = 0;
  std::int64_t wqes_sent_ = 0;
};

// Receive side of one RNIC, reduced to a cut-through drain at line rate.
// A chunk finishes arriving no earlier than its wire arrival, and no earlier
// than the pipe clearing everything ahead of it.
class RecvPipe {
 public:
  explicit RecvPipe(std::int64_t line_rate_bps) : rate_(line_rate_bps) {}

  SimTime deliver(std::int64_t bytes, SimTime wire_arrival) {
    SimTime queued = busy_until_ + wire_time(bytes, rate_);
    SimTime done = queued > wire_arrival ? queued : wire_arrival;
    busy_until_ = done;
    return done;
  }

  SimTime busy_until() const { return busy_until_; }

 private:
  std::int64_t rate_;
  SimTime busy_until_ = 0;
};

}  // namespace rnicsim
