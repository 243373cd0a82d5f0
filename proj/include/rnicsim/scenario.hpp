#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnicsim/control.hpp"
#include "rnicsim/rnic.hpp"
#include "rnicsim/time.hpp"

namespace rnicsim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One configured flow; qp_count > 1 expands into that many instances that
// share the owning app's token slot.
struct FlowSpec {
  std::string app_id;
  std::string host;
  std::string peer;
  FlowClass type = FlowClass::bandwidth;
  std::int64_t msg_bytes = 0;
  int batch_size = 1;
  int qp_count = 1;
  bool is_read = false;  // data is pulled from peer instead of written to it
  SimTime start = 0;
  std::optional<SimTime> stop;
  int weight = 1;
  PollingMode polling = PollingMode::busy;
};

struct ScenarioConfig {
  std::string name = "scenario";
  RnicConfig rnic;      // one NIC profile shared by every host
  DaemonConfig daemon;  // one control profile shared by every host
  bool justitia = true;
  SimTime epoch_stagger = 0;        // per-host offset of daemon clocks
  bool incast_coordination = false; // receivers also govern inbound writers
  std::vector<std::string> hosts;
  std::vector<FlowSpec> flows;
  SimTime duration = 0;
  SimTime warmup = 0;  // absolute; stats are collected in [warmup, duration]
  std::uint64_t seed = 1;
};

// Strict parse: unknown keys, bad types, and inconsistent references are
// rejected with the offending path in the message.
ScenarioConfig parse_scenario(const nlohmann::json& j, const std::string& name);
ScenarioConfig load_scenario_file(const std::string& path);

struct BuiltinScenario {
  std::string name;
  std::string description;
  nlohmann::json config;
};

const std::vector<BuiltinScenario>& builtin_scenarios();
const BuiltinScenario* find_builtin(const std::string& name);

// "unknown scenario x (known: a, b, ...)" helper shared by CLI and tests.
std::string unknown_scenario_message(const std::string& name);

}  // namespace rnicsim
