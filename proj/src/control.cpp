#include "rnicsim/control.hpp"

namespace rnicsim {

const char* flow_class_name(FlowClass cls) {
  switch (cls) {
    case FlowClass::latency: return "latency";
    case FlowClass::bandwidth: return "bandwidth";
    case FlowClass::throughput: return "throughput";
  }
  return "unknown";
}

const char* daemon_mode_name(DaemonMode mode) {
  switch (mode) {
    case DaemonMode::normal: return "normal";
    case DaemonMode::utilization: return "utilization";
  }
  return "unknown";
}

}  // namespace rnicsim
