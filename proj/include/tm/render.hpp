#pragma once

// Deterministic exporters (DOT and canonical JSON) plus the JSON encodings of
// simulator and conformance artifacts. Schemas live in docs/schema/.

#include <string>
#include <vector>

#include <json.hpp>

#include "tm/behavior.hpp"
#include "tm/model.hpp"
#include "tm/sim.hpp"

namespace tmkit {

using Json = nlohmann::ordered_json;

std::string to_dot(const Model& model);
std::string to_json(const Model& model);
/// Event DAG as DOT; loop arcs are dotted and do not constrain ranking.
/// Throws Error(E_CYCLE).
std::string render_behavior(const BehaviorGraph& graph);

Json model_to_json(const Model& model);
/// Inverse of model_to_json. Throws Error(E_PARSE) on malformed input.
Model model_from_json(const Json& doc);

Json value_to_json(const Value& v);
Value value_from_json(const Json& j);

Json scenario_to_json(const Scenario& sc);
Json steplog_to_json(const StepLog& log);
Json trace_to_json(const EventTrace& trace);
Json conformance_to_json(const ConformanceReport& report);
Json anomalies_to_json(const std::vector<Anomaly>& anomalies, const Model& model);
Json diagnostics_to_json(const std::vector<Diagnostic>& diags);

/// Fixed formatting used for every JSON artifact.
std::string dump_json(const Json& j);

}  // namespace tmkit
