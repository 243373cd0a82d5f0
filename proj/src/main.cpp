#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rnicsim/runner.hpp"
#include "rnicsim/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json resolve_scenario(const std::string& ref, std::string& name_out) {
  if (fs::exists(ref)) {
    std::ifstream in(ref);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw rnicsim::ConfigError("cannot parse '" + ref + "': " + e.what());
    }
    name_out = fs::path(ref).stem().string();
    return j;
  }
  if (const rnicsim::BuiltinScenario* b = rnicsim::find_builtin(ref)) {
    name_out = b->name;
    return b->config;
  }
  throw rnicsim::ConfigError(rnicsim::unknown_scenario_message(ref));
}

void write_outputs(const fs::path& dir, const rnicsim::RunResult& result) {
  fs::create_directories(dir);
  std::ofstream(dir / "metrics.csv") << result.metrics_csv;
  std::ofstream(dir / "timeseries.csv") << result.timeseries_csv;
  std::cout << "wrote " << (dir / "metrics.csv").string() << " and "
            << (dir / "timeseries.csv").string() << "\n";
}

void print_summary(const rnicsim::RunResult& result) {
  for (const rnicsim::MetricsRecord& r : result.metrics) {
    std::printf("%-8s %-12s %-10s bw=%9.3f Gbps  rate=%9.3f Mops  p99=%9.3f us\n",
                r.flow_id.c_str(), r.app_id.c_str(), flow_class_name(r.type), r.bandwidth_gbps,
                r.message_rate_mops, r.latency_p99_us);
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);  // bare words (e.g. auto) become strings
  }
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic multi-resource RNIC simulator with a tail-isolation engine"};
  app.require_subcommand(1);

  std::string scenario_ref;
  std::string out_dir = "out";
  std::string justitia_override;
  std::uint64_t seed = 0;
  bool seed_set = false;

  CLI::App* run = app.add_subcommand("run", "simulate one scenario and write CSV outputs");
  run->add_option("--scenario", scenario_ref, "scenario file or builtin name")->required();
  run->add_option("--seed", seed, "override sim.seed")->each([&](const std::string&) {
    seed_set = true;
  });
  run->add_option("--out", out_dir, "output directory (default: out)");
  run->add_option("--justitia", justitia_override, "override justitia_enabled")
      ->check(CLI::IsMember({"on", "off"}));

  CLI::App* list = app.add_subcommand("list", "print the builtin scenario catalog");

  std::string param;
  std::string values_text;
  CLI::App* sweep = app.add_subcommand("sweep", "run a scenario across parameter values");
  sweep->add_option("--scenario", scenario_ref, "scenario file or builtin name")->required();
  sweep->add_option("--param", param, "dotted config path, e.g. daemon.alpha")->required();
  sweep->add_option("--values", values_text, "comma-separated values")->required();
  sweep->add_option("--out", out_dir, "output directory (default: out)");
  sweep->add_option("--seed", seed, "override sim.seed")->each([&](const std::string&) {
    seed_set = true;
  });

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const rnicsim::BuiltinScenario& b : rnicsim::builtin_scenarios()) {
        std::printf("%-16s %s\n", b.name.c_str(), b.description.c_str());
      }
      return 0;
    }
    std::string name;
    json j = resolve_scenario(scenario_ref, name);
    if (seed_set) j["sim"]["seed"] = seed;

    if (run->parsed()) {
      if (!justitia_override.empty()) j["justitia_enabled"] = justitia_override == "on";
      rnicsim::ScenarioConfig cfg = rnicsim::parse_scenario(j, name);
      rnicsim::RunResult result = rnicsim::run_scenario(cfg);
      print_summary(result);
      write_outputs(out_dir, result);
      return 0;
    }

    // sweep
    std::string pointer = "/" + param;
    for (char& c : pointer) {
      if (c == '.') c = '/';
    }
    for (const std::string& value : split_csv(values_text)) {
      if (value.empty()) throw rnicsim::ConfigError("empty value in --values");
      json variant = j;
      variant[json::json_pointer(pointer)] = parse_value(value);
      rnicsim::ScenarioConfig cfg = rnicsim::parse_scenario(variant, name);
      rnicsim::RunResult result = rnicsim::run_scenario(cfg);
      std::printf("%s = %s\n", param.c_str(), value.c_str());
      print_summary(result);
      write_outputs(fs::path(out_dir) / (param + "=" + value), result);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
