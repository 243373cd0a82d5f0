#include "rnicsim/runner.hpp"

#include <deque>
#include <map>
#include <memory>

#include "rnicsim/engine.hpp"
#include "rnicsim/rng.hpp"
#include "rnicsim/shaper.hpp"

namespace rnicsim {
namespace {

// Outstanding messages kept by the unshaped closed loops.
constexpr int kRawBandwidthDepth = 2;
constexpr int kRawThroughputDepth = 256;
constexpr std::int64_t kRefProbeBytes = 10;
// Client think time between a completion and the next post. The span covers
// several service quanta so closed loops cannot phase-lock onto the chunk
// service grid, which would bias tail percentiles either way.
constexpr std::uint64_t kThinkJitterNs = 4096;

class Simulation {
 public:
  Simulation(const ScenarioConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts) {
    build_hosts();
    build_flows();
    build_daemons();
    schedule_flow_events();
    engine_.schedule(cfg_.daemon.ref_period, EventKind::sample_tick, [this] { sample_tick(); });
  }

  RunResult run() {
    engine_.run_until(cfg_.duration);
    return finish();
  }

 private:
  struct FlowInst {
    int idx = -1;
    std::string id;
    FlowSpec spec;  // qp_count collapsed to 1 per instance
    int app_num = -1;
    int app_host = -1;  // where the application and its completions live
    int src_host = -1;  // whose send engine executes the data WQEs
    int dst_host = -1;  // whose receive pipe the data lands in
    int app_qp = -1;
    int split_qp = -1;
    int req_qp = -1;  // read-request queue on the application host
    std::unique_ptr<Pacer> pacer;
    std::unique_ptr<SimRng> rng;
    bool is_ref = false;
    bool running = false;
    std::int64_t next_msg = 0;
    // stats
    std::int64_t win_bytes = 0;
    std::int64_t win_msgs = 0;
    std::int64_t interval_bytes = 0;
    std::vector<SimTime> samples;
  };

  struct Host {
    std::string name;
    std::unique_ptr<SendEngine> send;
    std::unique_ptr<RecvPipe> recv;
    std::unique_ptr<Daemon> daemon;
    int ref_flow = -1;
  };

  int host_index(const std::string& name) const {
    for (std::size_t i = 0; i < hosts_.size(); ++i) {
      if (hosts_[i].name == name) return static_cast<int>(i);
    }
    throw std::logic_error("unknown host " + name);
  }

  void build_hosts() {
    hosts_.reserve(cfg_.hosts.size());
    for (const std::string& name : cfg_.hosts) {
      Host h;
      h.name = name;
      h.send = std::make_unique<SendEngine>(engine_, cfg_.rnic);
      h.recv = std::make_unique<RecvPipe>(cfg_.rnic.line_rate_bps);
      hosts_.push_back(std::move(h));
    }
    for (std::size_t i = 0; i < hosts_.size(); ++i) {
      hosts_[i].send->set_sent_sink(
          [this](const Wqe& wqe, SimTime send_end) { on_sent(wqe, send_end); });
    }
  }

  int app_number(const std::string& app_id) {
    auto it = app_numbers_.find(app_id);
    if (it != app_numbers_.end()) return it->second;
    int n = static_cast<int>(app_numbers_.size());
    app_numbers_.emplace(app_id, n);
    return n;
  }

  void build_flows() {
    for (std::size_t s = 0; s < cfg_.flows.size(); ++s) {
      const FlowSpec& spec = cfg_.flows[s];
      for (int k = 0; k < spec.qp_count; ++k) {
        FlowInst f;
        f.idx = static_cast<int>(flows_.size());
        f.id = "f" + std::to_string(s);
        if (spec.qp_count > 1) f.id += "." + std::to_string(k);
        f.spec = spec;
        f.spec.qp_count = 1;
        f.app_num = app_number(spec.app_id);
        f.app_host = host_index(spec.host);
        int peer = host_index(spec.peer);
        f.src_host = spec.is_read ? peer : f.app_host;
        f.dst_host = spec.is_read ? f.app_host : peer;
        f.app_qp = hosts_[f.src_host].send->add_qp();
        if (cfg_.justitia && spec.type == FlowClass::bandwidth && !spec.is_read) {
          f.split_qp = hosts_[f.src_host].send->add_qp();
        }
        if (spec.is_read) f.req_qp = hosts_[f.app_host].send->add_qp();
        f.rng = std::make_unique<SimRng>(SimRng::derive(cfg_.seed, "flow/" + f.id));
        if (cfg_.justitia && spec.type != FlowClass::latency) {
          f.pacer = std::make_unique<Pacer>(
              engine_, f.idx, spec.type, f.spec.msg_bytes, f.spec.batch_size,
              /*local_tokens=*/!spec.is_read, cfg_.rnic.line_rate_bps,
              ChunkDictEntry{cfg_.daemon.chunk_with_latency, cfg_.daemon.chunk_without});
          int idx = f.idx;
          f.pacer->set_post_fn([this, idx](const Wqe& wqe) { pacer_post(idx, wqe); });
        }
        flows_.push_back(std::move(f));
      }
    }
    configured_flows_ = static_cast<int>(flows_.size());
    if (cfg_.justitia) {
      for (std::size_t h = 0; h < hosts_.size(); ++h) {
        FlowInst f;
        f.idx = static_cast<int>(flows_.size());
        f.id = "ref/" + hosts_[h].name;
        f.spec.app_id = f.id;
        f.spec.type = FlowClass::latency;
        f.spec.msg_bytes = kRefProbeBytes;
        f.app_host = static_cast<int>(h);
        f.src_host = static_cast<int>(h);
        f.dst_host = static_cast<int>((h + 1) % hosts_.size());
        f.app_qp = hosts_[h].send->add_qp();
        f.is_ref = true;
        f.running = true;
        hosts_[h].ref_flow = f.idx;
        flows_.push_back(std::move(f));
      }
    }
  }

  void build_daemons() {
    if (!cfg_.justitia) return;
    for (std::size_t h = 0; h < hosts_.size(); ++h) {
      DaemonConfig dcfg = cfg_.daemon;
      dcfg.seed = SimRng::derive(cfg_.seed, "daemon/" + hosts_[h].name);
      hosts_[h].daemon = std::make_unique<Daemon>(engine_, dcfg, cfg_.rnic);
      int hi = static_cast<int>(h);
      hosts_[h].daemon->set_probe_fn([this, hi](std::int64_t bytes) { post_probe(hi, bytes); });
      hosts_[h].daemon->set_grant_fn([this](int flow, const Grant& grant) {
        if (flows_[flow].pacer) flows_[flow].pacer->on_grant(grant);
      });
      hosts_[h].daemon->set_share_fn([this](int flow, const ShareUpdate& update) {
        engine_.schedule_in(cfg_.rnic.propagation_delay, EventKind::control_msg_arrival,
                            [this, flow, update] {
                              if (flows_[flow].pacer) flows_[flow].pacer->on_remote_share(update);
                            });
      });
      hosts_[h].daemon->start(static_cast<SimTime>(h) * cfg_.epoch_stagger);
    }
  }

  void schedule_flow_events() {
    for (int i = 0; i < configured_flows_; ++i) {
      const FlowInst& f = flows_[i];
      engine_.schedule(f.spec.start, EventKind::flow_start, [this, i] { start_flow(i); });
      if (f.spec.stop.has_value() && *f.spec.stop <= cfg_.duration) {
        engine_.schedule(*f.spec.stop, EventKind::flow_stop, [this, i] { stop_flow(i); });
      }
    }
  }

  // Registration at a daemon on another host rides a control message.
  void remote_register(int host, int flow) {
    engine_.schedule_in(cfg_.rnic.propagation_delay, EventKind::control_msg_arrival,
                        [this, host, flow] {
                          const FlowInst& f = flows_[flow];
                          hosts_[host].daemon->register_flow(flow, f.spec.type, f.app_num,
                                                             f.spec.weight, true);
                        });
  }

  void remote_unregister(int host, int flow) {
    engine_.schedule_in(cfg_.rnic.propagation_delay, EventKind::control_msg_arrival,
                        [this, host, flow] { hosts_[host].daemon->unregister_flow(flow); });
  }

  void start_flow(int i) {
    FlowInst& f = flows_[i];
    f.running = true;
    if (cfg_.justitia) {
      if (f.spec.is_read) {
        // governed by the data host: it sees the flow and shares its view
        remote_register(f.src_host, i);
      } else {
        hosts_[f.app_host].daemon->register_flow(i, f.spec.type, f.app_num, f.spec.weight, false);
        if (cfg_.incast_coordination) remote_register(f.dst_host, i);
      }
      if (f.pacer) f.pacer->start(engine_.now());
      if (f.spec.type == FlowClass::latency) post_closed_loop(i);
    } else {
      switch (f.spec.type) {
        case FlowClass::latency:
          post_closed_loop(i);
          break;
        case FlowClass::bandwidth:
          for (int k = 0; k < kRawBandwidthDepth; ++k) post_closed_loop(i);
          break;
        case FlowClass::throughput:
          for (int k = 0; k < kRawThroughputDepth; ++k) post_closed_loop(i);
          break;
      }
    }
  }

  void stop_flow(int i) {
    FlowInst& f = flows_[i];
    if (!f.running) return;
    f.running = false;
    if (cfg_.justitia) {
      if (f.pacer) f.pacer->stop();
      if (f.spec.is_read) {
        remote_unregister(f.src_host, i);
      } else {
        hosts_[f.app_host].daemon->unregister_flow(i);
        if (cfg_.incast_coordination) remote_unregister(f.dst_host, i);
      }
    }
  }

  // One in-flight message of the closed loops (latency flows always; all
  // flow classes when shaping is off).
  void post_closed_loop(int i) {
    FlowInst& f = flows_[i];
    Wqe w;
    w.flow = i;
    w.message_id = f.next_msg++;
    w.last_chunk = true;
    w.message_posted_at = engine_.now();
    if (f.spec.is_read) {
      w.read_request = true;
      w.read_bytes = f.spec.msg_bytes;
      hosts_[f.app_host].send->post(f.req_qp, w);
    } else {
      w.bytes = f.spec.msg_bytes;
      hosts_[f.src_host].send->post(f.app_qp, w);
    }
  }

  void post_probe(int host, std::int64_t bytes) {
    FlowInst& f = flows_[hosts_[host].ref_flow];
    Wqe w;
    w.flow = f.idx;
    w.bytes = bytes;
    w.message_id = f.next_msg++;
    w.last_chunk = true;
    w.message_posted_at = engine_.now();
    hosts_[host].send->post(f.app_qp, w);
  }

  void pacer_post(int i, const Wqe& wqe) {
    FlowInst& f = flows_[i];
    if (f.spec.is_read) {
      Wqe req = wqe;
      req.read_request = true;
      req.read_bytes = wqe.bytes;
      req.bytes = 0;
      hosts_[f.app_host].send->post(f.req_qp, req);
    } else {
      int qp = wqe.last_chunk || f.split_qp < 0 ? f.app_qp : f.split_qp;
      hosts_[f.src_host].send->post(qp, wqe);
    }
  }

  void on_sent(const Wqe& wqe, SimTime send_end) {
    const FlowInst& f = flows_[wqe.flow];
    if (wqe.read_request) {
      // the request reaches the data host and enqueues the actual transfer
      engine_.schedule(send_end + cfg_.rnic.propagation_delay, EventKind::control_msg_arrival,
                       [this, wqe] {
                         Wqe data = wqe;
                         data.read_request = false;
                         data.bytes = wqe.read_bytes;
                         data.read_bytes = 0;
                         const FlowInst& fl = flows_[data.flow];
                         hosts_[fl.src_host].send->post(fl.app_qp, data);
                       });
      return;
    }
    SimTime delivered =
        hosts_[f.dst_host].recv->deliver(wqe.bytes, send_end + cfg_.rnic.propagation_delay);
    engine_.schedule(delivered, EventKind::delivery,
                     [this, wqe, delivered] { on_delivered(wqe, delivered); });
  }

  void on_delivered(const Wqe& wqe, SimTime t) {
    FlowInst& f = flows_[wqe.flow];
    if (!f.is_ref) {
      f.interval_bytes += wqe.bytes;
      if (t >= cfg_.warmup && t <= cfg_.duration) f.win_bytes += wqe.bytes;
    }
    if (f.spec.is_read) {
      complete_chunk(wqe, t);  // a read completes where the data arrives
    } else {
      engine_.schedule(t + cfg_.rnic.propagation_delay, EventKind::completion,
                       [this, wqe, t] { complete_chunk(wqe, t + cfg_.rnic.propagation_delay); });
    }
  }

  void complete_chunk(const Wqe& wqe, SimTime t) {
    FlowInst& f = flows_[wqe.flow];
    if (f.pacer) f.pacer->on_chunk_acked(wqe.message_id);
    if (!wqe.last_chunk) return;
    SimTime seen = t;
    if (f.spec.polling == PollingMode::event_triggered) {
      seen += cfg_.rnic.completion_notify_delay;
    }
    SimTime latency = seen - wqe.message_posted_at;
    if (f.is_ref) {
      hosts_[f.app_host].daemon->on_ref_sample(latency);
      if (opts_.ref_oracle && f.app_host == 0) {
        ref_window_.push_back(latency);
        if (ref_window_.size() > static_cast<std::size_t>(cfg_.daemon.ref_count)) {
          ref_window_.pop_front();
        }
      }
      return;
    }
    if (seen >= cfg_.warmup && seen <= cfg_.duration) {
      ++f.win_msgs;
      if (f.spec.type != FlowClass::throughput) f.samples.push_back(latency);
    }
    if (!f.running) return;
    if (f.spec.type == FlowClass::latency) {
      SimTime next = seen + static_cast<SimTime>(f.rng->next_below(kThinkJitterNs));
      if (next < engine_.now()) next = engine_.now();
      int idx = f.idx;
      engine_.schedule(next, EventKind::wqe_post, [this, idx] {
        if (flows_[idx].running) post_closed_loop(idx);
      });
    } else if (!cfg_.justitia) {
      post_closed_loop(f.idx);  // keep the raw loop's window full
    }
  }

  void sample_tick() {
    TimeseriesRow row;
    row.time_us = ns_to_us(engine_.now());
    if (cfg_.justitia) {
      const Daemon& d0 = *hosts_[0].daemon;
      row.safe_util_gbps = static_cast<double>(d0.safe_util()) * 8.0 / 1e9;
      if (auto c99 = d0.current99()) row.current99_us = ns_to_us(*c99);
      row.mode = daemon_mode_name(d0.mode());
    }
    row.flow_gbps.reserve(static_cast<std::size_t>(configured_flows_));
    for (int i = 0; i < configured_flows_; ++i) {
      double gbps = static_cast<double>(flows_[i].interval_bytes) * 8.0 /
                    static_cast<double>(cfg_.daemon.ref_period);
      row.flow_gbps.push_back(gbps);
      flows_[i].interval_bytes = 0;
    }
    rows_.push_back(std::move(row));
    if (opts_.ref_oracle) {
      if (cfg_.justitia && !ref_window_.empty()) {
        std::vector<SimTime> copy(ref_window_.begin(), ref_window_.end());
        ref_exact_.push_back(ns_to_us(exact_percentile(std::move(copy), 0.99)));
      } else {
        ref_exact_.push_back(std::nullopt);
      }
    }
    if (engine_.now() + cfg_.daemon.ref_period <= cfg_.duration) {
      engine_.schedule_in(cfg_.daemon.ref_period, EventKind::sample_tick,
                          [this] { sample_tick(); });
    }
  }

  RunResult finish() {
    RunResult result;
    double window = static_cast<double>(cfg_.duration - cfg_.warmup);
    for (int i = 0; i < configured_flows_; ++i) {
      FlowInst& f = flows_[i];
      MetricsRecord r;
      r.flow_id = f.id;
      r.app_id = f.spec.app_id;
      r.type = f.spec.type;
      r.bandwidth_gbps = static_cast<double>(f.win_bytes) * 8.0 / window;
      r.message_rate_mops = static_cast<double>(f.win_msgs) * 1000.0 / window;
      if (!f.samples.empty()) {
        r.latency_p50_us = ns_to_us(exact_percentile(f.samples, 0.5));
        r.latency_p99_us = ns_to_us(exact_percentile(f.samples, 0.99));
      }
      r.sample_count = f.samples.size();
      if (cfg_.justitia && f.spec.type == FlowClass::bandwidth) {
        r.cpu_te_fraction =
            f.spec.is_read ? 1.0 : hosts_[f.app_host].daemon->alpha();
      }
      result.metrics.push_back(std::move(r));
      result.flow_ids.push_back(f.id);
    }
    if (cfg_.justitia) {
      result.host0_alpha = hosts_[0].daemon->alpha();
      result.host0_alpha_frozen = hosts_[0].daemon->alpha_frozen();
    }
    result.timeseries = std::move(rows_);
    result.ref_exact99_us = std::move(ref_exact_);
    result.metrics_csv = metrics_to_csv(result.metrics);
    result.timeseries_csv = timeseries_to_csv(result.flow_ids, result.timeseries);
    result.events_dispatched = engine_.dispatched();
    return result;
  }

  ScenarioConfig cfg_;
  RunOptions opts_;
  Engine engine_;
  std::vector<Host> hosts_;
  std::vector<FlowInst> flows_;
  int configured_flows_ = 0;
  std::map<std::string, int> app_numbers_;
  std::vector<TimeseriesRow> rows_;
  std::vector<std::optional<double>> ref_exact_;
  std::deque<SimTime> ref_window_;
};

}  // namespace

RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts) {
  if (cfg.hosts.empty()) throw ConfigError("scenario has no hosts");
  if (cfg.duration < 1) throw ConfigError("scenario duration must be positive");
  Simulation sim(cfg, opts);
  return sim.run();
}

}  // namespace rnicsim
