#include "rnicsim/engine.hpp"

namespace rnicsim {

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::token_tick: return "token-tick";
    case EventKind::ref_probe: return "ref-probe";
    case EventKind::wqe_post: return "wqe-post";
    case EventKind::service_complete: return "service-complete";
    case EventKind::control_msg_arrival: return "control-msg-arrival";
    case EventKind::flow_start: return "flow-start";
    case EventKind::flow_stop: return "flow-stop";
    case EventKind::aimd_update: return "aimd-update";
    case EventKind::fallback_check: return "fallback-check";
    case EventKind::pacer_timer: return "pacer-timer";
    case EventKind::delivery: return "delivery";
    case EventKind::completion: return "completion";
    case EventKind::sample_tick: return "sample-tick";
  }
  return "unknown";
}

}  // namespace rnicsim
