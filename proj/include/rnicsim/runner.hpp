#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rnicsim/metrics.hpp"
#include "rnicsim/scenario.hpp"

namespace rnicsim {

struct RunOptions {
  // Also keep the exact reference-probe window on the first host and report
  // its true p99 next to the sketch estimate at every sampling instant.
  bool ref_oracle = false;
};

struct RunResult {
  std::vector<MetricsRecord> metrics;
  std::vector<std::string> flow_ids;
  std::vector<TimeseriesRow> timeseries;
  std::vector<std::optional<double>> ref_exact99_us;  // parallel to timeseries
  std::string metrics_csv;
  std::string timeseries_csv;
  std::uint64_t events_dispatched = 0;
  double host0_alpha = 0.0;  // pacing aggressiveness in force at the end
  bool host0_alpha_frozen = false;

  const MetricsRecord* find(const std::string& flow_id) const {
    for (const MetricsRecord& r : metrics) {
      if (r.flow_id == flow_id) return &r;
    }
    return nullptr;
  }

  double total_bandwidth_gbps() const {
    double sum = 0;
    for (const MetricsRecord& r : metrics) sum += r.bandwidth_gbps;
    return sum;
  }
};

RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {});

}  // namespace rnicsim
