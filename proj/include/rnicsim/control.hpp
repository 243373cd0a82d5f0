#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnicsim/engine.hpp"
#include "rnicsim/rnic.hpp"
#include "rnicsim/sketch.hpp"
#include "rnicsim/time.hpp"

namespace rnicsim {

enum class FlowClass : std::uint8_t { latency, bandwidth, throughput };

const char* flow_class_name(FlowClass cls);

// ---- pure control arithmetic -------------------------------------------

// One SafeUtil step. With no latency flows the link is released entirely;
// under a tail violation we halve but never below the fair floor
// max_rate*(B+T)/(L+B+T) (ceiling division keeps the floor exact in the
// rational sense); otherwise additive increase up to max_rate.
inline std::int64_t aimd_update(std::int64_t safe_util, std::int64_t max_rate,
                                std::int64_t lat_flows, std::int64_t bw_flows,
                                std::int64_t tput_flows,
                                std::optional<SimTime> current99, SimTime target99,
                                std::int64_t step) {
  if (lat_flows == 0) return max_rate;
  if (current99.has_value() && *current99 > target99) {
    std::int64_t hungry = bw_flows + tput_flows;
    std::int64_t floor_util = ceil_div(max_rate * hungry, lat_flows + hungry);
    std::int64_t halved = safe_util / 2;
    std::int64_t next = std::max(halved, floor_util);
    return std::clamp<std::int64_t>(next, 1, max_rate);
  }
  std::int64_t next = safe_util + step;
  return std::clamp<std::int64_t>(next, 1, max_rate);
}

// Ops credit that keeps byte and verb budgets equivalent: a full-size token
// worth of small messages costs token_bytes * max_tput / max_rate executions,
// rounded down so the op budget never outruns the byte budget.
inline std::int64_t compute_token_ops(std::int64_t token_bytes, std::int64_t max_rate,
                                      std::int64_t max_tput) {
  __int128 num = static_cast<__int128>(token_bytes) * max_tput;
  auto ops = static_cast<std::int64_t>(num / max_rate);
  return ops < 1 ? 1 : ops;
}

// Grant period so that token_bytes per tau equals safe_util bytes/s.
inline SimTime compute_tau(std::int64_t token_bytes, std::int64_t safe_util) {
  if (safe_util < 1) safe_util = 1;
  SimTime tau = round_div_u128(token_bytes, kSecond, safe_util);
  return tau < 1 ? 1 : tau;
}

// ---- auto-tuned pacing aggressiveness ----------------------------------

// Sweeps alpha upward from 0 in 0.1 steps, one evaluation window per step,
// and freezes at the first step whose tail improvement falls under 5%.
class AlphaTuner {
 public:
  double alpha() const { return alpha_; }
  bool frozen() const { return frozen_; }

  void reset() {
    alpha_ = 0.0;
    prev_p99_.reset();
    frozen_ = false;
  }

  void on_window(std::optional<SimTime> p99) {
    if (frozen_) return;
    if (!p99.has_value()) return;  // nothing measured, hold this alpha
    if (prev_p99_.has_value()) {
      double improvement = (static_cast<double>(*prev_p99_) - static_cast<double>(*p99)) /
                           static_cast<double>(*prev_p99_);
      if (improvement < 0.05) {
        frozen_ = true;
        return;
      }
    }
    prev_p99_ = *p99;
    if (alpha_ >= 0.999) {
      frozen_ = true;
      return;
    }
    alpha_ = std::min(1.0, alpha_ + 0.1);
  }

 private:
  double alpha_ = 0.0;
  std::optional<SimTime> prev_p99_;
  bool frozen_ = false;
};

// ---- daemon --------------------------------------------------------------

struct DaemonConfig {
  SimTime target99 = 2 * kMicrosecond;
  SimTime ref_period = 500 * kMicrosecond;
  int ref_count = 10000;                 // estimator window, samples
  std::int64_t token_bytes = 1'000'000;  // granting granularity
  std::int64_t chunk_with_latency = 5120;
  std::int64_t chunk_without = 1'000'000;
  std::int64_t aimd_step = 125'000'000;  // bytes/s per period
  SimTime fallback_delta = 5 * kSecond;  // continuous violation before fallback
  bool fallback_enabled = true;
  double alpha = 0.0;
  bool alpha_auto = true;
  int alpha_window_periods = 10;
  std::uint64_t seed = 1;
};

enum class DaemonMode : std::uint8_t { normal, utilization };

const char* daemon_mode_name(DaemonMode mode);

struct Grant {
  std::int64_t bytes = 0;
  std::int64_t ops = 0;
  std::int64_t safe_util = 0;  // bytes/s, spacing basis
  std::int64_t chunk = 0;      // split size currently in force
  double alpha = 0.0;
};

// Counts snapshot sent toward remote shapers (receiver view of §-level
// coordination). share = 1/(L+B+T) is carried as exact counts.
struct ShareUpdate {
  std::int64_t lat = 0;
  std::int64_t bw = 0;
  std::int64_t tput = 0;
  SimTime issued_at = 0;

  double share() const {
    std::int64_t n = lat + bw + tput;
    return n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
  }
};

struct Admission {
  bool admitted = false;
  bool warning = false;
};

// Per-host control loop: reference-flow tail tracking, AIMD SafeUtil,
// multi-resource token issue over weighted app round-robin, utilization
// fallback, and share broadcast to remote-controlled flows.
class Daemon {
 public:
  using ProbeFn = std::function<void(std::int64_t bytes)>;
  using GrantFn = std::function<void(int flow, const Grant&)>;
  using ShareFn = std::function<void(int flow, const ShareUpdate&)>;

  Daemon(Engine& engine, const DaemonConfig& cfg, const RnicConfig& rnic)
      : engine_(engine),
        cfg_(cfg),
        max_rate_(rnic.line_rate_bps),
        safe_util_(rnic.line_rate_bps),
        token_ops_(compute_token_ops(cfg.token_bytes, rnic.line_rate_bps, rnic.max_tput_ops)),
        estimator_(cfg.ref_count, cfg.seed) {
    if (!cfg.alpha_auto) tuner_frozen_override_ = cfg.alpha;
    tau_ = compute_tau(cfg_.token_bytes, safe_util_);
  }

  void set_probe_fn(ProbeFn fn) { probe_fn_ = std::move(fn); }
  void set_grant_fn(GrantFn fn) { grant_fn_ = std::move(fn); }
  void set_share_fn(ShareFn fn) { share_fn_ = std::move(fn); }

  // Begins the periodic ticks. epoch staggers hosts so token clocks do not
  // line up across a fabric.
  void start(SimTime epoch) {
    engine_.schedule(epoch + cfg_.ref_period, EventKind::ref_probe, [this] { ref_tick(); });
    engine_.schedule(epoch + cfg_.ref_period, EventKind::aimd_update, [this] { aimd_tick(); });
    last_token_tick_ = epoch;
    token_event_ = engine_.schedule(epoch + tau_, EventKind::token_tick, [this] { token_tick(); });
  }

  // remote_inbound: data originates elsewhere and is governed here through
  // share messages instead of local tokens.
  Admission register_flow(int flow, FlowClass cls, int app_id, int weight,
                          bool remote_inbound) {
    if (flow < 0) throw std::invalid_argument("flow id must be >= 0");
    if (weight < 1) throw std::invalid_argument("flow weight must be >= 1");
    for (const Entry& e : flows_) {
      if (e.flow == flow && e.registered) {
        throw std::invalid_argument("flow " + std::to_string(flow) + " already registered");
      }
    }
    flows_.push_back(Entry{flow, cls, app_id, weight, remote_inbound, true});
    count(cls) += 1;
    if (!remote_inbound && cls != FlowClass::latency) attach_consumer(flow, cls, app_id, weight);
    on_counts_changed();
    Admission result{true, false};
    if (cls == FlowClass::latency) {
      std::optional<SimTime> c99 = estimator_.current_p99();
      if (c99.has_value() && *c99 > cfg_.target99) {
        result.warning = true;  // tail already blown: admit, but flag it
      }
    }
    return result;
  }

  void unregister_flow(int flow) {
    for (Entry& e : flows_) {
      if (e.flow == flow && e.registered) {
        e.registered = false;
        count(e.cls) -= 1;
        if (!e.remote_inbound && e.cls != FlowClass::latency) detach_consumer(flow);
        on_counts_changed();
        return;
      }
    }
    throw std::invalid_argument("flow " + std::to_string(flow) + " is not registered");
  }

  // Reference probe round trip measured; feeds the window estimator.
  void on_ref_sample(SimTime latency_ns) { estimator_.record(latency_ns); }

  std::int64_t safe_util() const { return safe_util_; }
  SimTime tau() const { return tau_; }
  std::int64_t token_ops() const { return token_ops_; }
  DaemonMode mode() const { return mode_; }
  std::optional<SimTime> current99() const { return estimator_.current_p99(); }
  std::int64_t lat_count() const { return lat_; }
  std::int64_t bw_count() const { return bw_; }
  std::int64_t tput_count() const { return tput_; }
  const DaemonConfig& config() const { return cfg_; }

  // Latency flows are only honored in normal mode; utilization mode always
  // runs the coarse chunk.
  std::int64_t chunk_size() const {
    bool latency_present = lat_ > 0 && mode_ == DaemonMode::normal;
    return latency_present ? cfg_.chunk_with_latency : cfg_.chunk_without;
  }

  double alpha() const {
    if (mode_ == DaemonMode::utilization || lat_ == 0) return 0.0;
    if (tuner_frozen_override_.has_value()) return *tuner_frozen_override_;
    return tuner_.alpha();
  }

  bool alpha_frozen() const { return tuner_frozen_override_.has_value() || tuner_.frozen(); }

 private:
  struct Entry {
    int flow;
    FlowClass cls;
    int app_id;
    int weight;
    bool remote_inbound;
    bool registered;
    bool share_sent = false;
  };

  struct App {
    int app_id;
    int weight;
    std::vector<int> flows;  // registration order
    std::size_t cursor = 0;
  };

  std::int64_t& count(FlowClass cls) {
    switch (cls) {
      case FlowClass::latency: return lat_;
      case FlowClass::bandwidth: return bw_;
      case FlowClass::throughput: return tput_;
    }
    throw std::logic_error("bad flow class");
  }

  void attach_consumer(int flow, FlowClass, int app_id, int weight) {
    for (App& app : apps_) {
      if (app.app_id == app_id) {
        app.flows.push_back(flow);
        return;
      }
    }
    apps_.push_back(App{app_id, weight, {flow}, 0});
  }

  void detach_consumer(int flow) {
    for (App& app : apps_) {
      auto it = std::find(app.flows.begin(), app.flows.end(), flow);
      if (it != app.flows.end()) {
        app.flows.erase(it);
        if (app.cursor >= app.flows.size()) app.cursor = 0;
        return;
      }
    }
  }

  void on_counts_changed() {
    broadcast_shares();
    // a changed mix invalidates the pacing sweep
    if (cfg_.alpha_auto) tuner_.reset();
  }

  // Delta-triggered: a flow hears from us when the counts moved or it has
  // never been told its share.
  void broadcast_shares() {
    if (!share_fn_) return;
    ShareUpdate update{lat_, bw_, tput_, engine_.now()};
    bool changed = update.lat != last_sent_.lat || update.bw != last_sent_.bw ||
                   update.tput != last_sent_.tput;
    for (Entry& e : flows_) {
      if (!e.registered || !e.remote_inbound || e.cls == FlowClass::latency) continue;
      if (changed || !e.share_sent) {
        share_fn_(e.flow, update);
        e.share_sent = true;
      }
    }
    if (changed) last_sent_ = update;
  }

  void ref_tick() {
    if (lat_ > 0 && probe_fn_) probe_fn_(10);
    engine_.schedule_in(cfg_.ref_period, EventKind::ref_probe, [this] { ref_tick(); });
  }

  void aimd_tick() {
    std::optional<SimTime> c99 = estimator_.current_p99();
    if (mode_ == DaemonMode::normal) {
      bool violating = lat_ > 0 && c99.has_value() && *c99 > cfg_.target99;
      if (violating) {
        if (!violation_since_.has_value()) violation_since_ = engine_.now();
      } else {
        violation_since_.reset();
      }
      if (cfg_.fallback_enabled && violation_since_.has_value() &&
          engine_.now() - *violation_since_ >= cfg_.fallback_delta && bw_ + tput_ > 0) {
        enter_utilization();
      }
    }
    if (mode_ == DaemonMode::utilization) {
      // latency flows are ignored; give the link away and watch the mix
      set_safe_util(max_rate_);
      if (ratio_rose_since_entry()) leave_utilization();
    } else {
      set_safe_util(aimd_update(safe_util_, max_rate_, lat_, bw_, tput_, c99, cfg_.target99,
                                cfg_.aimd_step));
    }
    if (cfg_.alpha_auto && mode_ == DaemonMode::normal && lat_ > 0) {
      if (++window_ticks_ >= cfg_.alpha_window_periods) {
        window_ticks_ = 0;
        tuner_.on_window(c99);
      }
    }
    engine_.schedule_in(cfg_.ref_period, EventKind::aimd_update, [this] { aimd_tick(); });
  }

  void enter_utilization() {
    mode_ = DaemonMode::utilization;
    entry_lat_ = lat_;
    entry_hungry_ = bw_ + tput_;
    violation_since_.reset();
  }

  void leave_utilization() {
    mode_ = DaemonMode::normal;
    violation_since_.reset();
  }

  // Return condition: L/(B+T) strictly above its value at fallback entry,
  // compared exactly by cross multiplication.
  bool ratio_rose_since_entry() const {
    return lat_ * entry_hungry_ > entry_lat_ * (bw_ + tput_);
  }

  void set_safe_util(std::int64_t next) {
    if (next == safe_util_) return;
    safe_util_ = next;
    SimTime new_tau = compute_tau(cfg_.token_bytes, safe_util_);
    if (new_tau == tau_) return;
    tau_ = new_tau;
    engine_.cancel(token_event_);
    SimTime next_tick = std::max(engine_.now(), last_token_tick_ + tau_);
    token_event_ =
        engine_.schedule(next_tick, EventKind::token_tick, [this] { token_tick(); });
  }

  void token_tick() {
    last_token_tick_ = engine_.now();
    if (const int flow = next_consumer(); flow >= 0 && grant_fn_) {
      grant_fn_(flow, Grant{cfg_.token_bytes, token_ops_, safe_util_, chunk_size(), alpha()});
    }
    token_event_ = engine_.schedule_in(tau_, EventKind::token_tick, [this] { token_tick(); });
  }

  // Weighted round-robin across apps, plain round-robin inside an app.
  // Returns -1 when no local consumer is active (the grant lapses).
  int next_consumer() {
    if (apps_.empty()) return -1;
    std::size_t tried = 0;
    while (tried < apps_.size()) {
      App& app = apps_[app_cursor_];
      if (app.flows.empty()) {
        advance_app();
        ++tried;
        continue;
      }
      if (grants_left_ <= 0) grants_left_ = app.weight;
      int flow = app.flows[app.cursor % app.flows.size()];
      app.cursor = (app.cursor + 1) % app.flows.size();
      if (--grants_left_ <= 0) advance_app();
      return flow;
    }
    return -1;
  }

  void advance_app() {
    app_cursor_ = (app_cursor_ + 1) % apps_.size();
    grants_left_ = 0;
  }

  Engine& engine_;
  DaemonConfig cfg_;
  std::int64_t max_rate_;
  std::int64_t safe_util_;
  std::int64_t token_ops_;
  SimTime tau_ = 0;
  TailEstimator estimator_;

  ProbeFn probe_fn_;
  GrantFn grant_fn_;
  ShareFn share_fn_;

  std::vector<Entry> flows_;
  std::vector<App> apps_;
  std::size_t app_cursor_ = 0;
  int grants_left_ = 0;
  std::int64_t lat_ = 0, bw_ = 0, tput_ = 0;

  DaemonMode mode_ = DaemonMode::normal;
  std::optional<SimTime> violation_since_;
  std::int64_t entry_lat_ = 0, entry_hungry_ = 0;

  AlphaTuner tuner_;
  std::optional<double> tuner_frozen_override_;
  int window_ticks_ = 0;

  EventHandle token_event_ = 0;
  SimTime last_token_tick_ = 0;

  ShareUpdate last_sent_{-1, -1, -1, 0};
};

}  // namespace rnicsim
