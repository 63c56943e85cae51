#pragma once

// Events over diagram regions, event traces extracted from simulator logs,
// and weak-precedence conformance against a behavior graph.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tm/model.hpp"

namespace tmkit {

struct StepLog;

struct EventOccurrence {
  std::string event;
  std::int64_t time = 0;
  std::size_t step = 0;
  std::optional<std::int64_t> token;
  std::string stage;  // display path of the stage the step reached

  bool operator==(const EventOccurrence&) const = default;
};

struct EventTrace {
  std::vector<EventOccurrence> occurrences;

  std::vector<std::string> event_ids() const;
  bool operator==(const EventTrace&) const = default;
};

struct Violation {
  std::size_t position = 0;
  std::string event;
  std::string missing;

  bool operator==(const Violation&) const = default;
};

struct ConformanceReport {
  std::vector<Violation> violations;
  bool conformant() const { return violations.empty(); }
};

/// Closed region of an event; throws Error(E_REGION_EMPTY | E_ANCHOR | E_NOELEM).
Region event_region(const Model& model, const Event& event);

/// One occurrence per step whose traversed edge, or fired trigger, or reached
/// stage equals an event anchor. Throws Error(E_MODEL_MISMATCH) if the log was
/// produced from a different model.
EventTrace extract_events(const StepLog& log, const Model& model);
EventTrace extract_events(const StepLog& log, const std::vector<Event>& events, const std::string& model_hash);

/// Every occurrence of B needs, for each non-loop arc A -> B, an earlier
/// occurrence of A. Throws Error(E_UNKNOWN_EVENT) for events absent from
/// the graph.
ConformanceReport conforms(const EventTrace& trace, const BehaviorGraph& graph);
ConformanceReport conforms(const std::vector<std::string>& trace, const BehaviorGraph& graph);

/// Longest-path layering over non-loop arcs. Throws Error(E_CYCLE).
std::vector<std::set<std::string>> topo_layers(const BehaviorGraph& graph);

}  // namespace tmkit
