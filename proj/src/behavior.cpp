#include "tm/behavior.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "tm/sim.hpp"

namespace tmkit {

std::vector<std::string> EventTrace::event_ids() const {
  std::vector<std::string> out;
  out.reserve(occurrences.size());
  for (const auto& o : occurrences) out.push_back(o.event);
  return out;
}

Region event_region(const Model& model, const Event& event) {
  if (event.elements.empty()) throw Error(code::kRegionEmpty, "event " + event.id + " has an empty region");
  Region r = subdiagram(model, std::set<ElementRef>(event.elements.begin(), event.elements.end()));
  if (!r.contains(event.anchor)) throw Error(code::kAnchor, "anchor of " + event.id + " lies outside its region");
  return r;
}

namespace {

bool anchor_hits(const ElementRef& anchor, const std::string& element, const std::optional<StageRef>& to) {
  if (anchor.kind == ElementRef::Kind::Edge) return anchor.name == element;
  if (anchor.kind == ElementRef::Kind::Stage) return to && *to == anchor.stage_ref();
  return false;
}

EventTrace extract_impl(const StepLog& log, const std::vector<Event>& events, const std::string& model_hash,
                        const Model* model) {
  if (log.model_hash != model_hash)
    throw Error(code::kModelMismatch, "step log was produced from a different model");
  EventTrace trace;
  auto label = [&](const std::optional<StageRef>& s) -> std::string {
    if (!s) return {};
    return model ? display_path(*model, *s) : s->id();
  };
  for (const auto& step : log.steps) {
    // The traversed element comes first, then triggers in firing order.
    for (const auto& ev : events)
      if (anchor_hits(ev.anchor, step.element, step.to))
        trace.occurrences.push_back({ev.id, step.time, step.index, step.token, label(step.to)});
    for (const auto& fired : step.fired_triggers) {
      for (const auto& ev : events)
        if (ev.anchor.kind == ElementRef::Kind::Edge && ev.anchor.name == fired)
          trace.occurrences.push_back({ev.id, step.time, step.index, step.token, label(step.to)});
    }
  }
  return trace;
}

}  // namespace

EventTrace extract_events(const StepLog& log, const std::vector<Event>& events, const std::string& model_hash) {
  return extract_impl(log, events, model_hash, nullptr);
}

EventTrace extract_events(const StepLog& log, const Model& model) {
  return extract_impl(log, model.events, tmkit::model_hash(model), &model);
}

ConformanceReport conforms(const std::vector<std::string>& trace, const BehaviorGraph& graph) {
  std::set<std::string> nodes(graph.nodes.begin(), graph.nodes.end());
  std::map<std::string, std::vector<std::string>> preds;
  for (const auto& a : graph.arcs)
    if (!a.loop) preds[a.to].push_back(a.from);

  ConformanceReport report;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& ev = trace[i];
    if (!nodes.count(ev)) throw Error(code::kUnknownEvent, "trace names undeclared event '" + ev + "'");
    if (auto it = preds.find(ev); it != preds.end()) {
      for (const auto& p : it->second)
        if (!seen.count(p)) report.violations.push_back({i, ev, p});
    }
    seen.insert(ev);
  }
  return report;
}

ConformanceReport conforms(const EventTrace& trace, const BehaviorGraph& graph) {
  return conforms(trace.event_ids(), graph);
}

std::vector<std::set<std::string>> topo_layers(const BehaviorGraph& graph) {
  std::map<std::string, int> indeg;
  std::map<std::string, int> layer;
  for (const auto& n : graph.nodes) indeg[n] = 0;
  for (const auto& a : graph.arcs) {
    if (!indeg.count(a.from) || !indeg.count(a.to))
      throw Error(code::kUnknownEvent, "arc " + a.from + " -> " + a.to + " names an undeclared event");
    if (!a.loop) ++indeg[a.to];
  }
  std::deque<std::string> ready;
  for (const auto& n : graph.nodes)
    if (indeg[n] == 0) {
      ready.push_back(n);
      layer[n] = 0;
    }
  std::size_t visited = 0;
  int depth = 0;
  while (!ready.empty()) {
    std::string id = ready.front();
    ready.pop_front();
    ++visited;
    for (const auto& a : graph.arcs) {
      if (a.loop || a.from != id) continue;
      layer[a.to] = std::max(layer[a.to], layer[id] + 1);
      depth = std::max(depth, layer[a.to]);
      if (--indeg[a.to] == 0) ready.push_back(a.to);
    }
  }
  if (visited != indeg.size()) throw Error(code::kCycle, "behavior graph has a cycle not flagged as loop");
  std::vector<std::set<std::string>> out(graph.nodes.empty() ? 0 : static_cast<std::size_t>(depth) + 1);
  for (const auto& [id, l] : layer) out[static_cast<std::size_t>(l)].insert(id);
  return out;
}

}  // namespace tmkit
