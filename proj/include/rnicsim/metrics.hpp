#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rnicsim/control.hpp"
#include "rnicsim/time.hpp"

namespace rnicsim {

// q-th percentile as the ceil(q*n)-th smallest sample, by full sort.
SimTime exact_percentile(std::vector<SimTime> samples, double q);

struct MetricsRecord {
  std::string flow_id;
  std::string app_id;
  FlowClass type = FlowClass::bandwidth;
  double bandwidth_gbps = 0;
  double message_rate_mops = 0;
  double latency_p50_us = 0;
  double latency_p99_us = 0;
  std::uint64_t sample_count = 0;
  double cpu_te_fraction = 0;
};

std::string metrics_to_csv(const std::vector<MetricsRecord>& rows);

// One sampling instant of the first host's daemon plus per-flow delivery
// rates over the elapsed sampling interval.
struct TimeseriesRow {
  double time_us = 0;
  std::optional<double> safe_util_gbps;
  std::optional<double> current99_us;
  std::string mode;
  std::vector<double> flow_gbps;  // parallel to the header's flow ids
};

std::string timeseries_to_csv(const std::vector<std::string>& flow_ids,
                              const std::vector<TimeseriesRow>& rows);

}  // namespace rnicsim
