#include "rnicsim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rnicsim {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& kv : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (kv.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail(path + "." + kv.key(), "unknown field");
  }
}

double as_num(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

std::int64_t as_int(const json& v, const std::string& path) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_unsigned()) {
    auto u = v.get<std::uint64_t>();
    if (u > 9'000'000'000'000'000'000ULL) fail(path, "integer out of range");
    return static_cast<std::int64_t>(u);
  }
  if (v.is_number_float()) {
    double d = v.get<double>();
    double r = std::nearbyint(d);
    if (std::fabs(d - r) > 1e-6 || std::fabs(d) > 9e15) fail(path, "expected an integer");
    return static_cast<std::int64_t>(r);
  }
  fail(path, "expected an integer");
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    auto i = v.get<std::int64_t>();
    if (i < 0) fail(path, "expected a non-negative integer");
    return static_cast<std::uint64_t>(i);
  }
  if (v.is_number_float()) {
    double d = v.get<double>();
    double r = std::nearbyint(d);
    if (d < 0 || std::fabs(d - r) > 1e-6 || d > 1.8e19) {
      fail(path, "expected a non-negative integer");
    }
    return static_cast<std::uint64_t>(r);
  }
  fail(path, "expected a non-negative integer");
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected a boolean");
  return v.get<bool>();
}

std::string as_str(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::int64_t gbps_to_bps(double gbps) { return std::llround(gbps * 1e9 / 8.0); }
SimTime us_ns(double us) { return std::llround(us * 1e3); }

RnicConfig parse_rnic(const json& j, const std::string& path) {
  check_keys(j, path,
             {"line_rate_gbps", "max_tput_mops", "propagation_delay_us",
              "completion_notify_delay_us"});
  RnicConfig cfg;
  if (const json* v = find(j, "line_rate_gbps")) {
    double g = as_num(*v, path + ".line_rate_gbps");
    if (g <= 0) fail(path + ".line_rate_gbps", "must be positive");
    cfg.line_rate_bps = gbps_to_bps(g);
  }
  if (const json* v = find(j, "max_tput_mops")) {
    double m = as_num(*v, path + ".max_tput_mops");
    if (m <= 0) fail(path + ".max_tput_mops", "must be positive");
    cfg.max_tput_ops = std::llround(m * 1e6);
  }
  if (const json* v = find(j, "propagation_delay_us")) {
    double us = as_num(*v, path + ".propagation_delay_us");
    if (us < 0) fail(path + ".propagation_delay_us", "must be >= 0");
    cfg.propagation_delay = us_ns(us);
  }
  if (const json* v = find(j, "completion_notify_delay_us")) {
    double us = as_num(*v, path + ".completion_notify_delay_us");
    if (us < 0) fail(path + ".completion_notify_delay_us", "must be >= 0");
    cfg.completion_notify_delay = us_ns(us);
  }
  return cfg;
}

void parse_daemon(const json& j, const std::string& path, ScenarioConfig& out) {
  check_keys(j, path,
             {"target99_us", "ref_period_us", "ref_count", "token_bytes",
              "chunk_bytes_with_latency", "chunk_bytes_without", "aimd_step_gbps",
              "delta_s", "fallback_enabled", "alpha", "epoch_stagger_us",
              "incast_coordination"});
  DaemonConfig& d = out.daemon;
  if (const json* v = find(j, "target99_us")) {
    double us = as_num(*v, path + ".target99_us");
    if (us <= 0) fail(path + ".target99_us", "must be positive");
    d.target99 = us_ns(us);
  }
  if (const json* v = find(j, "ref_period_us")) {
    double us = as_num(*v, path + ".ref_period_us");
    if (us <= 0) fail(path + ".ref_period_us", "must be positive");
    d.ref_period = us_ns(us);
  }
  if (const json* v = find(j, "ref_count")) {
    std::int64_t n = as_int(*v, path + ".ref_count");
    if (n < 10) fail(path + ".ref_count", "must be >= 10");
    d.ref_count = static_cast<int>(n);
  }
  if (const json* v = find(j, "token_bytes")) {
    std::int64_t n = as_int(*v, path + ".token_bytes");
    if (n < 1) fail(path + ".token_bytes", "must be >= 1");
    d.token_bytes = n;
  }
  if (const json* v = find(j, "chunk_bytes_with_latency")) {
    std::int64_t n = as_int(*v, path + ".chunk_bytes_with_latency");
    if (n < 1) fail(path + ".chunk_bytes_with_latency", "must be >= 1");
    d.chunk_with_latency = n;
  }
  if (const json* v = find(j, "chunk_bytes_without")) {
    std::int64_t n = as_int(*v, path + ".chunk_bytes_without");
    if (n < 1) fail(path + ".chunk_bytes_without", "must be >= 1");
    d.chunk_without = n;
  }
  if (const json* v = find(j, "aimd_step_gbps")) {
    double g = as_num(*v, path + ".aimd_step_gbps");
    if (g <= 0) fail(path + ".aimd_step_gbps", "must be positive");
    d.aimd_step = gbps_to_bps(g);
  }
  if (const json* v = find(j, "delta_s")) {
    double s = as_num(*v, path + ".delta_s");
    if (s <= 0) fail(path + ".delta_s", "must be positive");
    d.fallback_delta = std::llround(s * 1e9);
  }
  if (const json* v = find(j, "fallback_enabled")) {
    d.fallback_enabled = as_bool(*v, path + ".fallback_enabled");
  }
  if (const json* v = find(j, "alpha")) {
    if (v->is_string()) {
      if (v->get<std::string>() != "auto") fail(path + ".alpha", "must be a number or \"auto\"");
      d.alpha_auto = true;
    } else {
      double a = as_num(*v, path + ".alpha");
      if (a < 0.0 || a > 1.0) fail(path + ".alpha", "must be in [0, 1]");
      d.alpha = a;
      d.alpha_auto = false;
    }
  }
  if (const json* v = find(j, "epoch_stagger_us")) {
    double us = as_num(*v, path + ".epoch_stagger_us");
    if (us < 0) fail(path + ".epoch_stagger_us", "must be >= 0");
    out.epoch_stagger = us_ns(us);
  }
  if (const json* v = find(j, "incast_coordination")) {
    out.incast_coordination = as_bool(*v, path + ".incast_coordination");
  }
}

FlowSpec parse_flow(const json& j, const std::string& path,
                    const std::vector<std::string>& hosts) {
  check_keys(j, path,
             {"app_id", "host", "peer", "flow_type", "msg_bytes", "batch_size",
              "qp_count", "direction", "start_us", "stop_us", "weight",
              "polling_mode"});
  FlowSpec f;
  const json* v = find(j, "app_id");
  if (!v) fail(path + ".app_id", "required");
  f.app_id = as_str(*v, path + ".app_id");
  if (f.app_id.empty()) fail(path + ".app_id", "must not be empty");

  auto host_of = [&](const char* key) {
    const json* h = find(j, key);
    if (!h) fail(path + "." + key, "required");
    std::string name = as_str(*h, path + "." + key);
    for (const std::string& known : hosts) {
      if (known == name) return name;
    }
    fail(path + "." + key, "host '" + name + "' is not declared in hosts");
  };
  f.host = host_of("host");
  f.peer = host_of("peer");
  if (f.host == f.peer) fail(path + ".peer", "must differ from host");

  v = find(j, "flow_type");
  if (!v) fail(path + ".flow_type", "required");
  std::string type = as_str(*v, path + ".flow_type");
  if (type == "latency") {
    f.type = FlowClass::latency;
  } else if (type == "bandwidth") {
    f.type = FlowClass::bandwidth;
  } else if (type == "throughput") {
    f.type = FlowClass::throughput;
  } else {
    fail(path + ".flow_type", "must be latency, bandwidth, or throughput");
  }

  f.msg_bytes = f.type == FlowClass::bandwidth ? 1'000'000 : 16;
  if (const json* m = find(j, "msg_bytes")) {
    f.msg_bytes = as_int(*m, path + ".msg_bytes");
    if (f.msg_bytes < 1) fail(path + ".msg_bytes", "must be >= 1");
  }
  if (const json* b = find(j, "batch_size")) {
    std::int64_t n = as_int(*b, path + ".batch_size");
    if (n < 1) fail(path + ".batch_size", "must be >= 1");
    f.batch_size = static_cast<int>(n);
  }
  if (const json* q = find(j, "qp_count")) {
    std::int64_t n = as_int(*q, path + ".qp_count");
    if (n < 1) fail(path + ".qp_count", "must be >= 1");
    f.qp_count = static_cast<int>(n);
  }
  if (const json* d = find(j, "direction")) {
    std::string dir = as_str(*d, path + ".direction");
    if (dir == "read") {
      f.is_read = true;
    } else if (dir != "send") {
      fail(path + ".direction", "must be send or read");
    }
  }
  if (f.is_read && f.type == FlowClass::throughput) {
    fail(path + ".direction", "read is supported for latency and bandwidth flows");
  }
  if (const json* s = find(j, "start_us")) {
    double us = as_num(*s, path + ".start_us");
    if (us < 0) fail(path + ".start_us", "must be >= 0");
    f.start = us_ns(us);
  }
  if (const json* s = find(j, "stop_us")) {
    double us = as_num(*s, path + ".stop_us");
    f.stop = us_ns(us);
    if (*f.stop <= f.start) fail(path + ".stop_us", "must be after start_us");
  }
  if (const json* w = find(j, "weight")) {
    std::int64_t n = as_int(*w, path + ".weight");
    if (n < 1) fail(path + ".weight", "must be >= 1");
    f.weight = static_cast<int>(n);
  }
  if (const json* p = find(j, "polling_mode")) {
    std::string mode = as_str(*p, path + ".polling_mode");
    if (mode == "event") {
      f.polling = PollingMode::event_triggered;
    } else if (mode != "busy") {
      fail(path + ".polling_mode", "must be busy or event");
    }
  }
  return f;
}

}  // namespace

ScenarioConfig parse_scenario(const json& j, const std::string& name) {
  check_keys(j, name, {"rnic", "daemon", "hosts", "flows", "sim", "justitia_enabled"});
  ScenarioConfig cfg;
  cfg.name = name;

  if (const json* v = find(j, "rnic")) cfg.rnic = parse_rnic(*v, name + ".rnic");
  if (const json* v = find(j, "daemon")) parse_daemon(*v, name + ".daemon", cfg);
  if (const json* v = find(j, "justitia_enabled")) {
    cfg.justitia = as_bool(*v, name + ".justitia_enabled");
  }

  const json* hosts = find(j, "hosts");
  if (!hosts) fail(name + ".hosts", "required");
  if (!hosts->is_array() || hosts->empty()) fail(name + ".hosts", "must be a non-empty array");
  for (std::size_t i = 0; i < hosts->size(); ++i) {
    std::string path = name + ".hosts[" + std::to_string(i) + "]";
    std::string h = as_str((*hosts)[i], path);
    if (h.empty()) fail(path, "must not be empty");
    for (const std::string& seen : cfg.hosts) {
      if (seen == h) fail(path, "duplicate host '" + h + "'");
    }
    cfg.hosts.push_back(h);
  }

  const json* flows = find(j, "flows");
  if (!flows) fail(name + ".flows", "required");
  if (!flows->is_array() || flows->empty()) fail(name + ".flows", "must be a non-empty array");
  for (std::size_t i = 0; i < flows->size(); ++i) {
    cfg.flows.push_back(
        parse_flow((*flows)[i], name + ".flows[" + std::to_string(i) + "]", cfg.hosts));
  }
  // one weight per app per host, or token accounting would be ambiguous
  for (std::size_t i = 0; i < cfg.flows.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const FlowSpec& a = cfg.flows[k];
      const FlowSpec& b = cfg.flows[i];
      if (a.app_id == b.app_id && a.host == b.host && a.weight != b.weight) {
        fail(name + ".flows[" + std::to_string(i) + "].weight",
             "conflicts with an earlier flow of app '" + a.app_id + "'");
      }
    }
  }

  const json* sim = find(j, "sim");
  if (!sim) fail(name + ".sim", "required");
  check_keys(*sim, name + ".sim", {"duration_us", "seed", "warmup_us"});
  const json* dur = find(*sim, "duration_us");
  if (!dur) fail(name + ".sim.duration_us", "required");
  double dur_us = as_num(*dur, name + ".sim.duration_us");
  if (dur_us <= 0) fail(name + ".sim.duration_us", "must be positive");
  cfg.duration = us_ns(dur_us);
  if (const json* v = find(*sim, "seed")) cfg.seed = as_u64(*v, name + ".sim.seed");
  cfg.warmup = cfg.duration / 10;
  if (const json* v = find(*sim, "warmup_us")) {
    double us = as_num(*v, name + ".sim.warmup_us");
    if (us < 0) fail(name + ".sim.warmup_us", "must be >= 0");
    cfg.warmup = us_ns(us);
    if (cfg.warmup >= cfg.duration) fail(name + ".sim.warmup_us", "must be before duration_us");
  }
  cfg.daemon.seed = cfg.seed;
  return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  std::string name = path;
  if (auto slash = name.find_last_of('/'); slash != std::string::npos) {
    name = name.substr(slash + 1);
  }
  if (auto dot = name.rfind(".json"); dot != std::string::npos) name = name.substr(0, dot);
  return parse_scenario(j, name);
}

namespace {

json base_daemon() {
  return json{{"target99_us", 2.5},
              {"ref_period_us", 500},
              {"ref_count", 10000},
              {"token_bytes", 1000000},
              {"chunk_bytes_with_latency", 5120},
              {"chunk_bytes_without", 1000000},
              {"aimd_step_gbps", 1},
              {"delta_s", 5},
              {"fallback_enabled", true},
              {"alpha", "auto"}};
}

json flow(const char* app, const char* host, const char* peer, const char* type,
          std::int64_t msg_bytes) {
  return json{{"app_id", app}, {"host", host}, {"peer", peer},
              {"flow_type", type}, {"msg_bytes", msg_bytes}};
}

std::vector<BuiltinScenario> make_builtins() {
  std::vector<BuiltinScenario> out;

  {
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", base_daemon()},
           {"hosts", {"h0", "h1"}},
           {"flows",
            {flow("lat", "h0", "h1", "latency", 16), flow("bw", "h0", "h1", "bandwidth", 1000000)}},
           {"sim", {{"duration_us", 1000000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"lat-vs-bw",
                   "one small-message latency app sharing a sender NIC with one bandwidth app",
                   j});
  }
  {
    json t = flow("tput", "h0", "h1", "throughput", 16);
    t["batch_size"] = 64;
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", base_daemon()},
           {"hosts", {"h0", "h1"}},
           {"flows", {t, flow("bw", "h0", "h1", "bandwidth", 1000000)}},
           {"sim", {{"duration_us", 100000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"tput-vs-bw",
                   "a message-rate-bound app against a bandwidth app on one sender", j});
  }
  {
    json flows = json::array();
    flows.push_back(flow("lat", "h0", "h1", "latency", 16));
    for (int i = 0; i < 16; ++i) {
      std::string app = "bw" + std::to_string(i);
      flows.push_back(flow(app.c_str(), "h0", "h1", "bandwidth", 1000000));
    }
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", base_daemon()},
           {"hosts", {"h0", "h1"}},
           {"flows", flows},
           {"sim", {{"duration_us", 500000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"multi-elephant",
                   "one latency app among sixteen bandwidth apps on one sender", j});
  }
  {
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", base_daemon()},
           {"hosts", {"h0", "h1"}},
           {"flows",
            {flow("small", "h0", "h1", "bandwidth", 1000000),
             flow("big", "h0", "h1", "bandwidth", 1000000000)}},
           {"sim", {{"duration_us", 1000000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"bw-1MB-vs-1GB",
                   "two bandwidth apps with 1 MB vs 1 GB messages on one sender", j});
  }
  {
    json x = flow("x", "h0", "h1", "bandwidth", 1000000);
    x["qp_count"] = 16;
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", base_daemon()},
           {"hosts", {"h0", "h1"}},
           {"flows", {x, flow("y", "h0", "h1", "bandwidth", 1000000)}},
           {"sim", {{"duration_us", 500000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"multi-qp",
                   "a 16-QP bandwidth app against a single-QP bandwidth app", j});
  }
  {
    json flows = json::array();
    for (int i = 0; i < 8; ++i) {
      std::string app = "lat" + std::to_string(i);
      json f = flow(app.c_str(), "h0", "h1", "latency", 16);
      f["start_us"] = 40000.0 * i;
      f["stop_us"] = 600000.0 - 30000.0 * i;
      flows.push_back(f);
    }
    for (int i = 0; i < 8; ++i) {
      std::string app = "bw" + std::to_string(i);
      json f = flow(app.c_str(), "h0", "h1", "bandwidth", 1000000);
      f["start_us"] = 25000.0 * i;
      flows.push_back(f);
    }
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", base_daemon()},
           {"hosts", {"h0", "h1"}},
           {"flows", flows},
           {"sim", {{"duration_us", 600000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"dynamic-8x8",
                   "eight latency and eight bandwidth apps arriving and departing", j});
  }
  {
    json d = base_daemon();
    d["target99_us"] = 1.0;
    d["delta_s"] = 0.1;
    json late = flow("lat2", "h0", "h1", "latency", 16);
    late["start_us"] = 600000;
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", d},
           {"hosts", {"h0", "h1"}},
           {"flows",
            {flow("lat", "h0", "h1", "latency", 16), flow("bw1", "h0", "h1", "bandwidth", 1000000),
             flow("bw2", "h0", "h1", "bandwidth", 1000000), late}},
           {"sim", {{"duration_us", 1000000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"fallback",
                   "an unattainable tail target that trips the utilization fallback and recovers",
                   j});
  }
  {
    json r = flow("reader", "h0", "h1", "latency", 16);
    r["direction"] = "read";
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 0.8}}},
           {"daemon", base_daemon()},
           {"hosts", {"h0", "h1", "h2"}},
           {"flows", {r, flow("bw", "h1", "h2", "bandwidth", 1000000)}},
           {"sim", {{"duration_us", 1000000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"remote-read",
                   "a latency app reading from a remote host that is busy sending", j});
  }
  {
    json d = base_daemon();
    d["target99_us"] = 3.0;
    d["epoch_stagger_us"] = 0.96;
    d["incast_coordination"] = true;
    json hosts = json::array();
    hosts.push_back("r0");
    for (int i = 0; i < 8; ++i) hosts.push_back("w" + std::to_string(i));
    hosts.push_back("s8");
    json flows = json::array();
    for (int i = 0; i < 8; ++i) {
      std::string app = "wr" + std::to_string(i);
      std::string host = "w" + std::to_string(i);
      flows.push_back(flow(app.c_str(), host.c_str(), "r0", "bandwidth", 1000000));
    }
    flows.push_back(flow("lat", "s8", "r0", "latency", 16));
    json j{{"rnic", {{"line_rate_gbps", 48}, {"max_tput_mops", 30}, {"propagation_delay_us", 1.0}}},
           {"daemon", d},
           {"hosts", hosts},
           {"flows", flows},
           {"sim", {{"duration_us", 500000}, {"seed", 1}}},
           {"justitia_enabled", true}};
    out.push_back({"incast",
                   "eight writers incast into one receiver beside a latency sender", j});
  }
  return out;
}

}  // namespace

const std::vector<BuiltinScenario>& builtin_scenarios() {
  static const std::vector<BuiltinScenario> catalog = make_builtins();
  return catalog;
}

const BuiltinScenario* find_builtin(const std::string& name) {
  for (const BuiltinScenario& b : builtin_scenarios()) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::string unknown_scenario_message(const std::string& name) {
  std::ostringstream out;
  out << "unknown scenario '" << name << "' (known:";
  const auto& catalog = builtin_scenarios();
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    out << (i == 0 ? " " : ", ") << catalog[i].name;
  }
  out << ")";
  return out.str();
}

}  // namespace rnicsim
