#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "rnicsim/time.hpp"

namespace rnicsim {

enum class EventKind : std::uint8_t {
  token_tick,
  ref_probe,
  wqe_post,
  service_complete,
  control_msg_arrival,
  flow_start,
  flow_stop,
  aimd_update,
  fallback_check,
  pacer_timer,
  delivery,
  completion,
  sample_tick,
};

const char* event_kind_name(EventKind kind);

// Opaque handle for cancellation. 0 is never issued.
using EventHandle = std::uint64_t;

// Single-thread discrete event loop. Ordering is (fire_at, insertion seq),
// so same-timestamp events dispatch in FIFO order. cancel() is lazy: the
// entry stays queued and is skipped at pop time.
class Engine {
 public:
  SimTime now() const { return clock_; }

  EventHandle schedule(SimTime fire_at, EventKind kind, std::function<void()> action) {
    if (fire_at < clock_) {
      throw std::logic_error("schedule in the past: t=" + std::to_string(fire_at) +
                             " now=" + std::to_string(clock_));
    }
    EventHandle h = ++next_seq_;
    queue_.push(Entry{fire_at, h, kind, std::move(action)});
    return h;
  }

  EventHandle schedule_in(SimTime delay, EventKind kind, std::function<void()> action) {
    return schedule(clock_ + delay, kind, std::move(action));
  }

  void cancel(EventHandle h) {
    if (h != 0) cancelled_.insert(h);
  }

  // Dispatches every event with fire_at <= end, then sets the clock to end.
  void run_until(SimTime end) {
    while (!queue_.empty()) {
      const Entry& top = queue_.top();
      if (top.fire_at > end) break;
      Entry e = std::move(const_cast<Entry&>(top));
      queue_.pop();
      if (auto it = cancelled_.find(e.seq); it != cancelled_.end()) {
        cancelled_.erase(it);
        continue;
      }
      clock_ = e.fire_at;
      ++dispatched_;
      if (trace_) trace_->push_back(TraceRecord{e.fire_at, e.seq, e.kind});
      e.action();
    }
    clock_ = end;
  }

  std::uint64_t dispatched() const { return dispatched_; }

  struct TraceRecord {
    SimTime fire_at;
    EventHandle seq;
    EventKind kind;
    bool operator==(const TraceRecord&) const = default;
  };

  // When set, every dispatch is appended to *sink (determinism checks).
  void set_trace(std::vector<TraceRecord>* sink) { trace_ = sink; }

 private:
  struct Entry {
    SimTime fire_at;
    EventHandle seq;
    EventKind kind;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  SimTime clock_ = 0;
  EventHandle next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::unordered_set<EventHandle> cancelled_;
  std::vector<TraceRecord>* trace_ = nullptr;
};

}  // namespace rnicsim
