// Acceptance gate: one line per criterion, nonzero exit if any fails.
// Tolerances are pinned next to each check.
#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnicsim/control.hpp"
#include "rnicsim/metrics.hpp"
#include "rnicsim/rng.hpp"
#include "rnicsim/runner.hpp"
#include "rnicsim/scenario.hpp"
#include "rnicsim/shaper.hpp"
#include "rnicsim/sketch.hpp"

using namespace rnicsim;
using nlohmann::json;

namespace {

constexpr std::int64_t kMaxRate = 6'000'000'000;  // 48 gigabit line
constexpr std::int64_t kStep = 125'000'000;       // 1 gigabit AIMD step

int failures = 0;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void check(int id, const char* label, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s | %s\n", ok ? "PASS" : "FAIL", id, label,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

ScenarioConfig builtin(const std::string& name) {
  const BuiltinScenario* b = find_builtin(name);
  if (!b) throw std::runtime_error("missing builtin " + name);
  return parse_scenario(b->config, b->name);
}

const MetricsRecord& by_app(const RunResult& r, const std::string& app) {
  for (const MetricsRecord& m : r.metrics) {
    if (m.app_id == app) return m;
  }
  throw std::runtime_error("no metrics for app " + app);
}

int col_of(const RunResult& r, const std::string& flow_id) {
  for (std::size_t i = 0; i < r.flow_ids.size(); ++i) {
    if (r.flow_ids[i] == flow_id) return static_cast<int>(i);
  }
  throw std::runtime_error("no timeseries column for " + flow_id);
}

// Baseline: the named app alone on the same fabric with shaping off.
RunResult solo_run(ScenarioConfig cfg, const std::string& app) {
  std::vector<FlowSpec> keep;
  for (const FlowSpec& f : cfg.flows) {
    if (f.app_id == app) keep.push_back(f);
  }
  cfg.flows = std::move(keep);
  cfg.justitia = false;
  return run_scenario(cfg);
}

bool within(double a, double b, double rel) {
  return std::fabs(a - b) <= rel * std::max(a, b);
}

// ---- criterion 13 harness: paced split-message completion ----------------

bool paced_message_ok(std::uint64_t seed, std::string* why) {
  SimRng rng(seed);
  const std::int64_t rate = kMaxRate;
  const std::int64_t msg = 1 + static_cast<std::int64_t>(rng.next_below(1'000'000));
  const std::int64_t chunk = 128 + static_cast<std::int64_t>(rng.next_below(16'384));
  const double alpha = rng.next_below(2) == 0 ? 0.0 : rng.next_double();

  Engine eng;
  Pacer pacer(eng, 0, FlowClass::bandwidth, msg, 1, /*local_tokens=*/true, rate,
              ChunkDictEntry{});
  struct Post {
    SimTime t;
    Wqe w;
  };
  std::vector<Post> posts;
  std::map<std::int64_t, int> completions;
  std::map<std::int64_t, SimTime> done_at;
  SimTime link_free = 0;
  int done_messages = 0;

  pacer.set_post_fn([&](const Wqe& w) {
    posts.push_back({eng.now(), w});
    link_free = std::max(link_free, eng.now()) + wire_time(w.bytes, rate);
    SimTime at = link_free;
    bool last = w.last_chunk;
    std::int64_t mid = w.message_id;
    eng.schedule(at, EventKind::completion, [&, at, last, mid] {
      if (last) {
        ++completions[mid];
        done_at[mid] = at;
        if (++done_messages >= 2) pacer.stop();
      }
      pacer.on_chunk_acked(mid);
    });
  });
  pacer.start(0);
  // Tokens arrive like real grants: finite credit, renewed each period.
  std::int64_t grant_bytes = 3 * msg;
  std::function<void()> regrant = [&] {
    pacer.on_grant(Grant{grant_bytes, 1'000'000, rate, chunk, alpha});
    if (pacer.active()) {
      eng.schedule_in(compute_tau(grant_bytes, rate), EventKind::token_tick, regrant);
    }
  };
  regrant();
  eng.run_until(kSecond);

  if (completions.empty()) {
    *why = fmt("seed %llu: no message completed", (unsigned long long)seed);
    return false;
  }
  for (const auto& [mid, n] : completions) {
    if (n != 1) {
      *why = fmt("message %lld completed %d times", (long long)mid, n);
      return false;
    }
    std::int64_t sum = 0, next_index = 0, lasts = 0;
    SimTime last_post = 0;
    for (const Post& p : posts) {
      if (p.w.message_id != mid) continue;
      if (p.w.chunk_index != next_index++) {
        *why = fmt("message %lld: chunk order broken", (long long)mid);
        return false;
      }
      if (p.w.bytes < 1 || p.w.bytes > chunk) {
        *why = fmt("message %lld: chunk of %lld bytes vs limit %lld", (long long)mid,
                   (long long)p.w.bytes, (long long)chunk);
        return false;
      }
      sum += p.w.bytes;
      lasts += p.w.last_chunk ? 1 : 0;
      last_post = std::max(last_post, p.t);
    }
    if (sum != msg || lasts != 1 || done_at[mid] < last_post) {
      *why = fmt("message %lld: bytes %lld/%lld, %lld last chunks, done %lld < post %lld",
                 (long long)mid, (long long)sum, (long long)msg, (long long)lasts,
                 (long long)done_at[mid], (long long)last_post);
      return false;
    }
  }
  return true;
}

}  // namespace

int main() {
  // --- 1: AIMD controller conformance --------------------------------------
  {
    bool ex =
        aimd_update(2'000'000'000, kMaxRate, 0, 1, 0, 3000, 2000, kStep) == kMaxRate &&
        aimd_update(6'000'000'000, kMaxRate, 1, 1, 0, 3000, 2000, kStep) ==
            3'000'000'000 &&
        aimd_update(1'600'000'000, kMaxRate, 3, 1, 0, 3000, 2000, kStep) ==
            1'500'000'000 &&
        aimd_update(3'000'000'000, kMaxRate, 1, 1, 0, 1500, 2000, kStep) ==
            3'125'000'000;
    SimRng rng(2024);
    bool inv = true;
    for (int s = 0; s < 100'000 && inv; ++s) {
      std::int64_t lat = 1 + static_cast<std::int64_t>(rng.next_below(4));
      std::int64_t bw = static_cast<std::int64_t>(rng.next_below(5));
      std::int64_t tput = static_cast<std::int64_t>(rng.next_below(5));
      std::int64_t safe = kMaxRate;
      for (int i = 0; i < 8; ++i) {
        std::optional<SimTime> c99{rng.next_below(2) == 0 ? 3000 : 1000};
        safe = aimd_update(safe, kMaxRate, lat, bw, tput, c99, 2000, kStep);
        if (safe * (lat + bw + tput) < kMaxRate * (bw + tput) || safe > kMaxRate) {
          inv = false;
          break;
        }
      }
    }
    check(1, "AIMD SafeUtil control (exact + floor invariant)", ex && inv,
          fmt("4/4 worked updates exact; floor held over 100000 random sequences: %s",
              inv ? "yes" : "no"));
  }

  // --- 2: token arithmetic --------------------------------------------------
  {
    std::int64_t ops = compute_token_ops(1'000'000, kMaxRate, 30'000'000);
    SimTime tau = compute_tau(1'000'000, kMaxRate);
    bool ok = ops == 5000 && std::llabs(tau - 167'000) <= 1000;
    check(2, "token ops and period at 1 MB / 48 Gbps / 30 Mops", ok,
          fmt("token_ops=%lld (want 5000), tau=%lld ns (want 167000 +/- 1000)",
              (long long)ops, (long long)tau));
  }

  // Shared baseline: the latency app alone on the lat-vs-bw fabric.
  ScenarioConfig lvb = builtin("lat-vs-bw");
  RunResult lat_solo = solo_run(lvb, "lat");
  double solo_p99 = by_app(lat_solo, "lat").latency_p99_us;

  // --- 3: anomalies with shaping off ---------------------------------------
  {
    ScenarioConfig raw = lvb;
    raw.justitia = false;
    RunResult one = run_scenario(raw);
    double contended = by_app(one, "lat").latency_p99_us;

    ScenarioConfig me = builtin("multi-elephant");
    RunResult me_solo = solo_run(me, "lat");
    double me_base = by_app(me_solo, "lat").latency_p99_us;
    me.justitia = false;
    RunResult herd = run_scenario(me);
    double herd_p99 = by_app(herd, "lat").latency_p99_us;

    bool ok = contended >= 2.0 * solo_p99 && herd_p99 >= 10.0 * me_base;
    check(3, "unshaped elephants inflate small-message p99", ok,
          fmt("1 elephant: %.3f us vs solo %.3f us (>=2x); 16 elephants: %.3f us "
              "(>=10x of %.3f)",
              contended, solo_p99, herd_p99, me_base));
  }

  // --- 4: isolation with shaping on ----------------------------------------
  {
    ScenarioConfig cfg = lvb;
    cfg.daemon.target99 = llround(1.5 * solo_p99 * 1000.0);
    cfg.daemon.alpha = 1.0;
    cfg.daemon.alpha_auto = false;
    RunResult r = run_scenario(cfg);
    double p99 = by_app(r, "lat").latency_p99_us;
    double bw = by_app(r, "bw").bandwidth_gbps;
    double cap = 1.1 * ns_to_us(cfg.daemon.target99);
    bool ok = p99 <= cap && bw >= 0.45 * 48.0;
    check(4, "tail target met while bulk keeps a half share", ok,
          fmt("p99 %.3f us <= %.3f us; bw %.2f Gbps >= %.2f", p99, cap, bw, 0.45 * 48.0));
  }

  // --- 5: bandwidth fairness and overhead ----------------------------------
  RunResult fair_j;  // reused by criterion 14
  {
    ScenarioConfig cfg = builtin("bw-1MB-vs-1GB");
    ScenarioConfig raw = cfg;
    raw.justitia = false;
    RunResult r0 = run_scenario(raw);
    double small0 = by_app(r0, "small").bandwidth_gbps;
    double big0 = by_app(r0, "big").bandwidth_gbps;
    double skew = small0 > 0 ? big0 / small0 : 1e9;

    fair_j = run_scenario(cfg);
    double small1 = by_app(fair_j, "small").bandwidth_gbps;
    double big1 = by_app(fair_j, "big").bandwidth_gbps;
    double total = small1 + big1;
    bool ok = skew > 1.2 && within(small1, big1, 0.05) && total >= 0.94 * 48.0;
    check(5, "message-size fairness within 5%, overhead <= 6%", ok,
          fmt("unshaped skew %.1fx; shaped %.2f vs %.2f Gbps, total %.2f >= %.2f",
              skew, small1, big1, total, 0.94 * 48.0));
  }

  // --- 6: QP-count neutrality -----------------------------------------------
  RunResult mq;  // reused by criterion 14
  {
    mq = run_scenario(builtin("multi-qp"));
    double many = 0.0;
    for (const MetricsRecord& m : mq.metrics) {
      if (m.app_id == "x") many += m.bandwidth_gbps;
    }
    double one = by_app(mq, "y").bandwidth_gbps;
    bool ok = within(many, one, 0.05);
    check(6, "16-QP app gains nothing over a 1-QP app", ok,
          fmt("16-QP app %.2f Gbps vs 1-QP app %.2f Gbps (within 5%%)", many, one));
  }

  // --- 7: throughput vs bandwidth half shares -------------------------------
  {
    ScenarioConfig cfg = builtin("tput-vs-bw");
    RunResult both = run_scenario(cfg);
    RunResult t_solo = solo_run(cfg, "tput");
    RunResult b_solo = solo_run(cfg, "bw");
    double rate = by_app(both, "tput").message_rate_mops;
    double rate0 = by_app(t_solo, "tput").message_rate_mops;
    double bw = by_app(both, "bw").bandwidth_gbps;
    double bw0 = by_app(b_solo, "bw").bandwidth_gbps;
    bool ok = rate >= 0.45 * rate0 && bw >= 0.45 * bw0;
    check(7, "each hungry class keeps >= 45% of its solo resource", ok,
          fmt("tput %.2f/%.2f Mops (%.0f%%); bw %.2f/%.2f Gbps (%.0f%%)", rate, rate0,
              100.0 * rate / rate0, bw, bw0, 100.0 * bw / bw0));
  }

  // --- 8: fallback to utilization mode and recovery -------------------------
  RunResult fb;  // reused by criterion 14
  {
    ScenarioConfig cfg = builtin("fallback");
    fb = run_scenario(cfg);
    double target_us = ns_to_us(cfg.daemon.target99);
    double ref_us = ns_to_us(cfg.daemon.ref_period);
    double delta_us = ns_to_us(cfg.daemon.fallback_delta);
    double t2_us = 0.0;
    for (const FlowSpec& f : cfg.flows) {
      if (f.app_id == "lat2") t2_us = ns_to_us(f.start);
    }

    double t_viol = -1.0, t_flip = -1.0, t_norm = -1.0;
    for (const TimeseriesRow& row : fb.timeseries) {
      if (t_viol < 0 && row.current99_us && *row.current99_us > target_us) {
        t_viol = row.time_us;
      }
      if (t_flip < 0 && row.mode == "utilization") t_flip = row.time_us;
      if (t_norm < 0 && row.time_us >= t2_us && row.mode == "normal") {
        t_norm = row.time_us;
      }
    }

    int c1 = col_of(fb, by_app(fb, "bw1").flow_id);
    int c2 = col_of(fb, by_app(fb, "bw2").flow_id);
    double s1 = 0, s2 = 0;
    int n = 0;
    for (const TimeseriesRow& row : fb.timeseries) {
      if (row.mode != "utilization") continue;
      if (row.time_us <= t_flip + 2 * ref_us || row.time_us >= t2_us) continue;
      s1 += row.flow_gbps[c1];
      s2 += row.flow_gbps[c2];
      ++n;
    }
    double m1 = n ? s1 / n : 0.0, m2 = n ? s2 / n : 0.0, half = 24.0;
    bool flip_ok = t_viol >= 0 && t_flip > t_viol &&
                   t_flip - t_viol <= delta_us + 2 * ref_us;
    bool share_ok = n > 10 && std::fabs(m1 - half) <= 0.05 * half &&
                    std::fabs(m2 - half) <= 0.05 * half;
    bool revert_ok = t_norm >= 0 && t_norm - t2_us <= 2 * ref_us;
    check(8, "unattainable target trips utilization mode, then recovers",
          flip_ok && share_ok && revert_ok,
          fmt("flip %.0f us after first violation (cap %.0f); halves %.2f/%.2f Gbps; "
              "normal %.0f us after the new latency flow",
              t_flip - t_viol, delta_us + 2 * ref_us, m1, m2, t_norm - t2_us));
  }

  // --- 9: remote READ coordination, both directions -------------------------
  {
    ScenarioConfig rr = builtin("remote-read");
    RunResult r_solo = solo_run(rr, "reader");
    double base_a = by_app(r_solo, "reader").latency_p99_us;
    rr.daemon.target99 = llround(1.5 * base_a * 1000.0);
    rr.daemon.alpha = 1.0;
    rr.daemon.alpha_auto = false;
    RunResult ra = run_scenario(rr);
    double p99_a = by_app(ra, "reader").latency_p99_us;
    double bw_a = by_app(ra, "bw").bandwidth_gbps;
    bool ok_a = p99_a <= 1.1 * ns_to_us(rr.daemon.target99) && bw_a >= 0.45 * 48.0;

    json mirror{
        {"rnic",
         {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
        {"hosts", {"h0", "h1", "h2"}},
        {"flows",
         {json{{"app_id", "bwr"}, {"host", "h0"}, {"peer", "h1"},
               {"flow_type", "bandwidth"}, {"direction", "read"},
               {"msg_bytes", 1000000}},
          json{{"app_id", "lat"}, {"host", "h1"}, {"peer", "h2"},
               {"flow_type", "latency"}, {"msg_bytes", 16}}}},
        {"sim", {{"duration_us", 1000000}, {"seed", 1}}}};
    ScenarioConfig mc = parse_scenario(mirror, "read-mirror");
    RunResult m_solo = solo_run(mc, "lat");
    double base_b = by_app(m_solo, "lat").latency_p99_us;
    mc.daemon.target99 = llround(1.5 * base_b * 1000.0);
    mc.daemon.alpha = 1.0;
    mc.daemon.alpha_auto = false;
    RunResult rb = run_scenario(mc);
    double p99_b = by_app(rb, "lat").latency_p99_us;
    double bw_b = by_app(rb, "bwr").bandwidth_gbps;
    bool ok_b = p99_b <= 1.1 * ns_to_us(mc.daemon.target99) && bw_b >= 0.45 * 48.0;

    check(9, "remote READs and local flows isolate symmetrically", ok_a && ok_b,
          fmt("read-latency: p99 %.3f us (cap %.3f), bw %.2f; read-bandwidth: p99 "
              "%.3f us (cap %.3f), bw %.2f",
              p99_a, 1.1 * ns_to_us(rr.daemon.target99), bw_a, p99_b,
              1.1 * ns_to_us(mc.daemon.target99), bw_b));
  }

  // --- 10: incast with receiver coordination --------------------------------
  RunResult inc;  // reused by criterion 14
  {
    ScenarioConfig cfg = builtin("incast");
    RunResult i_solo = solo_run(cfg, "lat");
    double base = by_app(i_solo, "lat").latency_p99_us;
    inc = run_scenario(cfg);
    double p99 = by_app(inc, "lat").latency_p99_us;
    double agg = 0.0;
    for (const MetricsRecord& m : inc.metrics) {
      if (m.type == FlowClass::bandwidth) agg += m.bandwidth_gbps;
    }
    bool ok = p99 <= 1.5 * base && agg >= 0.8 * 48.0;
    check(10, "incast keeps the latency sender near solo at high link use", ok,
          fmt("p99 %.3f us <= 1.5x solo %.3f us; writers %.2f Gbps >= %.2f", p99, base,
              agg, 0.8 * 48.0));
  }

  // --- 11: sketch percentile vs exact oracle --------------------------------
  {
    SimRng rng(515151);
    auto lognormal = [&rng](double mu, double sigma) {
      double u1 = 1.0 - rng.next_double();
      double u2 = rng.next_double();
      double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
      return std::exp(mu + sigma * z);
    };
    int good = 0;
    for (int w = 0; w < 1000; ++w) {
      TailEstimator est(10'000, rng.next_u64());
      std::vector<SimTime> vals;
      vals.reserve(10'000);
      struct Comp {
        int kind;
        double a, b;
      };
      std::vector<Comp> comps;
      int ncomp = 1 + static_cast<int>(rng.next_below(3));
      for (int c = 0; c < ncomp; ++c) {
        int kind = static_cast<int>(rng.next_below(3));
        if (kind == 0) {
          comps.push_back({0, 100.0 * std::exp(rng.next_double() * std::log(80'000.0)), 0.0});
        } else if (kind == 1) {
          double lo = 100.0 * std::exp(rng.next_double() * std::log(40'000.0));
          comps.push_back({1, lo, lo * (1.0 + 9.0 * rng.next_double())});
        } else {
          double mu = std::log(1000.0) + rng.next_double() * std::log(1000.0);
          comps.push_back({2, mu, 0.1 + 0.9 * rng.next_double()});
        }
      }
      for (int i = 0; i < 10'000; ++i) {
        const Comp& c = comps[rng.next_below(comps.size())];
        double v = c.kind == 0   ? c.a
                   : c.kind == 1 ? c.a + (c.b - c.a) * rng.next_double()
                                 : lognormal(c.a, c.b);
        SimTime t = std::clamp<SimTime>(static_cast<SimTime>(v), 100, 8'000'000);
        est.record(t);
        vals.push_back(t);
      }
      SimTime exact = exact_percentile(vals, 0.99);
      std::optional<SimTime> p = est.current_p99();
      if (p) {
        double ratio = static_cast<double>(*p) / static_cast<double>(exact);
        if (ratio <= 1.1 * 1.005 && ratio >= 1.0 / (1.1 * 1.005)) ++good;
      }
    }
    check(11, "sketch p99 within one bucket factor of exact", good >= 990,
          fmt("%d/1000 randomized windows within 1.1x (need >= 990)", good));
  }

  // --- 12: chunk spacing sweep and auto-tuning -------------------------------
  {
    const double alphas[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    double p99s[5] = {0};
    bool cpu_ok = true, monotone = true;
    for (int k = 0; k < 5; ++k) {
      ScenarioConfig cfg = lvb;
      cfg.daemon.alpha = alphas[k];
      cfg.daemon.alpha_auto = false;
      RunResult r = run_scenario(cfg);
      p99s[k] = by_app(r, "lat").latency_p99_us;
      cpu_ok = cpu_ok && by_app(r, "bw").cpu_te_fraction == alphas[k];
      if (k > 0 && p99s[k] > p99s[k - 1] * 1.02) monotone = false;
    }
    RunResult aut = run_scenario(lvb);  // builtin default: alpha auto-tuned
    double p99_auto = by_app(aut, "lat").latency_p99_us;
    bool auto_ok = aut.host0_alpha_frozen &&
                   std::fabs(p99_auto - p99s[4]) <= 0.10 * p99s[4];
    check(12, "spacing sweep non-increasing, cpu_te = alpha, auto-tune lands",
          cpu_ok && monotone && auto_ok,
          fmt("p99 [%.3f %.3f %.3f %.3f %.3f] us; auto %.3f us (alpha %.1f, frozen %s)",
              p99s[0], p99s[1], p99s[2], p99s[3], p99s[4], p99_auto, aut.host0_alpha,
              aut.host0_alpha_frozen ? "yes" : "no"));
  }

  // --- 13: conservation and single completion --------------------------------
  {
    SimRng rng(7);
    bool split_ok = true;
    std::string why;
    for (int i = 0; i < 10'000 && split_ok; ++i) {
      std::int64_t msg = 1 + static_cast<std::int64_t>(rng.next_below(5'000'000));
      std::int64_t chunk = 1 + static_cast<std::int64_t>(rng.next_below(65'536));
      SplitPlan plan = SplitPlan::make(msg, chunk);
      if (plan.n_chunks != ceil_div(msg, chunk)) split_ok = false;
      std::int64_t sum = 0;
      for (std::int64_t k = 0; k < plan.n_chunks && split_ok; ++k) {
        std::int64_t b = plan.chunk_bytes(k);
        if (b < 1 || b > chunk || (k + 1 < plan.n_chunks && b != chunk)) split_ok = false;
        sum += b;
      }
      if (sum != msg) split_ok = false;
    }
    int paced_ok = 0;
    const int iters = 300;
    for (int i = 0; i < iters; ++i) {
      if (paced_message_ok(1000 + i, &why)) ++paced_ok;
    }
    bool ok = split_ok && paced_ok == iters;
    check(13, "split messages conserve bytes and complete exactly once", ok,
          ok ? fmt("10000 split plans exact; %d/%d paced messages clean", paced_ok, iters)
             : fmt("split_ok=%d, paced %d/%d: %s", split_ok ? 1 : 0, paced_ok, iters,
                   why.c_str()));
  }

  // --- 14: determinism --------------------------------------------------------
  {
    bool ok = true;
    std::string bad;
    const struct {
      const char* name;
      const RunResult* first;
    } reruns[] = {{"bw-1MB-vs-1GB", &fair_j}, {"fallback", &fb}, {"incast", &inc},
                  {"multi-qp", &mq}};
    for (const auto& t : reruns) {
      RunResult again = run_scenario(builtin(t.name));
      if (again.metrics_csv != t.first->metrics_csv ||
          again.timeseries_csv != t.first->timeseries_csv) {
        ok = false;
        bad = t.name;
      }
    }
    check(14, "identical seed reproduces byte-identical CSVs", ok,
          ok ? "4 scenarios re-run byte-identical (bw-1MB-vs-1GB, fallback, incast, multi-qp)"
             : "mismatch in " + bad);
  }

  std::printf("%d/14 criteria passed\n", 14 - failures);
  return failures == 0 ? 0 : 1;
}
