#include "rnicsim/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace rnicsim {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

SimTime exact_percentile(std::vector<SimTime> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("exact_percentile: no samples");
  if (!(q > 0.0) || q > 1.0) throw std::invalid_argument("exact_percentile: q must be in (0, 1]");
  std::sort(samples.begin(), samples.end());
  std::uint64_t rank = percentile_rank(q, samples.size());
  return samples[rank - 1];
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& rows) {
  std::string out =
      "flow_id,app_id,flow_type,achieved_bandwidth_gbps,message_rate_mops,"
      "latency_p50_us,latency_p99_us,sample_count,cpu_te_fraction\n";
  for (const MetricsRecord& r : rows) {
    out += r.flow_id;
    out += ',';
    out += r.app_id;
    out += ',';
    out += flow_class_name(r.type);
    out += ',';
    out += fmt(r.bandwidth_gbps);
    out += ',';
    out += fmt(r.message_rate_mops);
    out += ',';
    out += fmt(r.latency_p50_us);
    out += ',';
    out += fmt(r.latency_p99_us);
    out += ',';
    out += std::to_string(r.sample_count);
    out += ',';
    out += fmt(r.cpu_te_fraction);
    out += '\n';
  }
  return out;
}

std::string timeseries_to_csv(const std::vector<std::string>& flow_ids,
                              const std::vector<TimeseriesRow>& rows) {
  std::string out = "time_us,safe_util_gbps,current99_us,mode";
  for (const std::string& id : flow_ids) {
    out += ',';
    out += id;
  }
  out += '\n';
  for (const TimeseriesRow& r : rows) {
    out += fmt(r.time_us);
    out += ',';
    if (r.safe_util_gbps.has_value()) out += fmt(*r.safe_util_gbps);
    out += ',';
    if (r.current99_us.has_value()) out += fmt(*r.current99_us);
    out += ',';
    out += r.mode;
    for (double g : r.flow_gbps) {
      out += ',';
      out += fmt(g);
    }
    out += '\n';
  }
  return out;
}

}  // namespace rnicsim
