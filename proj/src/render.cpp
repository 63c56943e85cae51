#include "tm/render.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace tmkit {

namespace {

std::string dot_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

std::string guard_text(const Guard& g) {
  std::string lit = std::holds_alternative<std::string>(g.literal) ? "\"" + std::get<std::string>(g.literal) + "\""
                                                                  : value_to_string(g.literal);
  return g.subject + (g.op == Guard::Op::Eq ? " = " : " != ") + lit;
}

std::string edge_label(const Edge& e) {
  std::string label;
  if (e.carries) label = *e.carries;
  if (e.guard) label += (label.empty() ? "" : " ") + ("[" + guard_text(*e.guard) + "]");
  return label;
}

std::map<std::string, std::size_t> declaration_rank(const Model& m) {
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < m.declaration_order.size(); ++i)
    if (m.declaration_order[i].kind == Decl::Kind::Machine) rank.emplace(m.declaration_order[i].id, i);
  return rank;
}

void emit_machine(std::ostringstream& out, const Model& m, const Machine& mc, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  out << pad << "subgraph " << dot_quote("cluster_" + mc.id) << " {\n";
  out << pad << "  label=" << dot_quote(mc.name) << ";\n";
  for (StageKind k : kAllStages) {
    if (!mc.has_stage(k)) continue;
    StageRef s{mc.id, k};
    out << pad << "  " << dot_quote(s.id()) << " [label=" << dot_quote(stage_name(k));
    std::string residents;
    for (const auto& r : mc.residents)
      if (r.stage == k) residents += (residents.empty() ? "" : ", ") + r.thing;
    if (!residents.empty()) out << ", xlabel=" << dot_quote(residents);
    out << "];\n";
  }
  for (const Machine* child : m.children(mc.id)) emit_machine(out, m, *child, depth + 1);
  out << pad << "}\n";
}

Json domain_to_json(const Domain& d) {
  Json j;
  switch (d.type) {
    case Domain::Type::Enum:
      j["type"] = "enum";
      j["values"] = d.values;
      break;
    case Domain::Type::Bool:
      j["type"] = "bool";
      break;
    case Domain::Type::Int:
      j["type"] = "int";
      j["min"] = d.min;
      j["max"] = d.max;
      break;
  }
  return j;
}

Domain domain_from_json(const Json& j) {
  const std::string t = j.at("type").get<std::string>();
  if (t == "enum") return Domain::enumeration(j.at("values").get<std::vector<std::string>>());
  if (t == "bool") return Domain::boolean();
  if (t == "int") return Domain::integer(j.at("min").get<std::int64_t>(), j.at("max").get<std::int64_t>());
  throw Error(code::kParse, "unknown domain type '" + t + "'");
}

const char* decl_kind_name(Decl::Kind k) {
  switch (k) {
    case Decl::Kind::Thing:
      return "thing";
    case Decl::Kind::Machine:
      return "machine";
    case Decl::Kind::Edge:
      return "edge";
    case Decl::Kind::Event:
      return "event";
    case Decl::Kind::Behavior:
      return "behavior";
  }
  return "";
}

Decl::Kind decl_kind_from(const std::string& s) {
  for (auto k : {Decl::Kind::Thing, Decl::Kind::Machine, Decl::Kind::Edge, Decl::Kind::Event, Decl::Kind::Behavior})
    if (s == decl_kind_name(k)) return k;
  throw Error(code::kParse, "unknown declaration kind '" + s + "'");
}

StageKind stage_from_json(const Json& j) {
  auto k = parse_stage(j.get<std::string>());
  if (!k) throw Error(code::kParse, "unknown stage '" + j.get<std::string>() + "'");
  return *k;
}

// "A.B.Release" -> {A.B, Release}; machine names never contain dots.
StageRef stage_ref_from(const std::string& id) {
  auto dot = id.rfind('.');
  if (dot == std::string::npos) throw Error(code::kParse, "bad stage id '" + id + "'");
  auto k = parse_stage(id.substr(dot + 1));
  if (!k) throw Error(code::kParse, "bad stage id '" + id + "'");
  return {id.substr(0, dot), *k};
}

Json stage_json(const std::optional<StageRef>& s) { return s ? Json(s->id()) : Json(nullptr); }

const char* element_kind_name(ElementRef::Kind k) {
  switch (k) {
    case ElementRef::Kind::Machine:
      return "machine";
    case ElementRef::Kind::Stage:
      return "stage";
    case ElementRef::Kind::Attribute:
      return "attribute";
    case ElementRef::Kind::Thing:
      return "thing";
    case ElementRef::Kind::Edge:
      return "edge";
    case ElementRef::Kind::Event:
      return "event";
  }
  return "";
}

Json element_to_json(const ElementRef& e) {
  Json j;
  j["kind"] = element_kind_name(e.kind);
  j["id"] = e.id();
  return j;
}

ElementRef element_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const std::string id = j.at("id").get<std::string>();
  ElementRef e;
  if (kind == "stage") return ElementRef::of_stage(stage_ref_from(id));
  if (kind == "edge") return ElementRef::of_edge(id);
  if (kind == "machine") {
    e.kind = ElementRef::Kind::Machine;
    e.machine = id;
  } else if (kind == "attribute") {
    auto dot = id.rfind('.');
    if (dot == std::string::npos) throw Error(code::kParse, "bad attribute id '" + id + "'");
    e.kind = ElementRef::Kind::Attribute;
    e.machine = id.substr(0, dot);
    e.name = id.substr(dot + 1);
  } else if (kind == "thing") {
    e.kind = ElementRef::Kind::Thing;
    e.name = id;
  } else if (kind == "event") {
    e.kind = ElementRef::Kind::Event;
    e.name = id;
  } else {
    throw Error(code::kParse, "unknown element kind '" + kind + "'");
  }
  return e;
}

const char* step_kind_name(StepRecord::Kind k) {
  switch (k) {
    case StepRecord::Kind::Flow:
      return "flow";
    case StepRecord::Kind::Click:
      return "click";
    case StepRecord::Kind::Inject:
      return "inject";
    case StepRecord::Kind::Set:
      return "set";
  }
  return "";
}

Json payload_json(const std::vector<std::pair<std::string, Value>>& payload) {
  Json j = Json::object();
  for (const auto& [k, v] : payload) j[k] = value_to_json(v);
  return j;
}

}  // namespace

std::string to_dot(const Model& m) {
  std::ostringstream out;
  out << "digraph " << dot_quote(m.name) << " {\n";
  out << "  compound=true;\n";
  out << "  node [shape=box];\n";
  auto rank = declaration_rank(m);
  auto roots = m.roots();
  std::stable_sort(roots.begin(), roots.end(), [&](const Machine* a, const Machine* b) {
    return rank[a->id] < rank[b->id];
  });
  for (const Machine* r : roots) emit_machine(out, m, *r, 1);
  for (const auto& e : m.edges) {
    out << "  " << dot_quote(e.source.id()) << " -> " << dot_quote(e.target.id()) << " [id=" << dot_quote(e.id)
        << ", style=" << (e.kind == EdgeKind::Flow ? "solid" : "dashed");
    std::string label = edge_label(e);
    if (!label.empty()) out << ", label=" << dot_quote(label);
    out << "];\n";
  }
  out << "}\n";
  return out.str();
}

std::string render_behavior(const BehaviorGraph& g) {
  auto layers = topo_layers(g);
  std::ostringstream out;
  out << "digraph \"behavior\" {\n";
  if (!g.nodes.empty()) {
    out << "  rankdir=TB;\n";
    out << "  node [shape=ellipse];\n";
    for (const auto& layer : layers) {
      out << "  { rank=same;";
      for (const auto& n : layer) out << " " << dot_quote(n) << ";";
      out << " }\n";
    }
    for (const auto& a : g.arcs) {
      out << "  " << dot_quote(a.from) << " -> " << dot_quote(a.to);
      if (a.loop) out << " [style=dotted, constraint=false, label=\"loop\"]";
      out << ";\n";
    }
  }
  out << "}\n";
  return out.str();
}

Json value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return Json(x); }, v);
}

Value value_from_json(const Json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(code::kParse, "value must be bool, integer or string");
}

Json model_to_json(const Model& m) {
  Json j;
  j["format"] = "tm-model/1";
  j["model_hash"] = model_hash(m);
  j["name"] = m.name;
  j["navigator"] = m.navigator ? Json(*m.navigator) : Json(nullptr);

  Json things = Json::array();
  for (const auto& t : m.things) {
    Json tj;
    tj["id"] = t.id;
    Json fields = Json::array();
    for (const auto& f : t.fields) {
      Json fj;
      fj["name"] = f.name;
      fj["domain"] = domain_to_json(f.domain);
      fj["default"] = f.fallback ? value_to_json(*f.fallback) : Json(nullptr);
      fields.push_back(std::move(fj));
    }
    tj["fields"] = std::move(fields);
    things.push_back(std::move(tj));
  }
  j["things"] = std::move(things);

  Json machines = Json::array();
  for (const auto& mc : m.machines) {
    Json mj;
    mj["id"] = mc.id;
    mj["name"] = mc.name;
    mj["parent"] = mc.parent ? Json(*mc.parent) : Json(nullptr);
    mj["placement"] = mc.placement ? Json(stage_name(*mc.placement)) : Json(nullptr);
    Json stages = Json::array();
    for (StageKind k : mc.stages) stages.push_back(stage_name(k));
    mj["stages"] = std::move(stages);
    Json attrs = Json::array();
    for (const auto& a : mc.attributes) {
      Json aj;
      aj["name"] = a.name;
      aj["domain"] = domain_to_json(a.domain);
      aj["initial"] = value_to_json(a.initial);
      aj["process"] = a.is_process;
      attrs.push_back(std::move(aj));
    }
    mj["attributes"] = std::move(attrs);
    Json residents = Json::array();
    for (const auto& r : mc.residents) {
      Json rj;
      rj["thing"] = r.thing;
      rj["stage"] = stage_name(r.stage);
      residents.push_back(std::move(rj));
    }
    mj["residents"] = std::move(residents);
    machines.push_back(std::move(mj));
  }
  j["machines"] = std::move(machines);

  Json edges = Json::array();
  for (const auto& e : m.edges) {
    Json ej;
    ej["id"] = e.id;
    ej["named"] = e.named;
    ej["kind"] = e.kind == EdgeKind::Flow ? "flow" : "trigger";
    ej["source"] = e.source.id();
    ej["target"] = e.target.id();
    ej["carries"] = e.carries ? Json(*e.carries) : Json(nullptr);
    if (e.guard) {
      Json gj;
      gj["subject"] = e.guard->subject;
      gj["op"] = e.guard->op == Guard::Op::Eq ? "=" : "!=";
      gj["literal"] = value_to_json(e.guard->literal);
      ej["guard"] = std::move(gj);
    } else {
      ej["guard"] = nullptr;
    }
    edges.push_back(std::move(ej));
  }
  j["edges"] = std::move(edges);

  Json events = Json::array();
  for (const auto& ev : m.events) {
    Json vj;
    vj["id"] = ev.id;
    vj["label"] = ev.label;
    Json elems = Json::array();
    for (const auto& el : ev.elements) elems.push_back(element_to_json(el));
    vj["elements"] = std::move(elems);
    vj["anchor"] = element_to_json(ev.anchor);
    events.push_back(std::move(vj));
  }
  j["events"] = std::move(events);

  if (m.behavior) {
    Json bj;
    Json arcs = Json::array();
    for (const auto& a : m.behavior->arcs) arcs.push_back(Json{{"from", a.from}, {"to", a.to}, {"loop", a.loop}});
    bj["arcs"] = std::move(arcs);
    j["behavior"] = std::move(bj);
  } else {
    j["behavior"] = nullptr;
  }

  Json order = Json::array();
  for (const auto& d : m.declaration_order) order.push_back(Json{{"kind", decl_kind_name(d.kind)}, {"id", d.id}});
  j["declaration_order"] = std::move(order);
  return j;
}

Model model_from_json(const Json& j) {
  try {
    if (j.value("format", std::string{}) != "tm-model/1") throw Error(code::kParse, "not a tm-model/1 document");
    Model m;
    m.name = j.at("name").get<std::string>();
    if (!j.at("navigator").is_null()) m.navigator = j.at("navigator").get<std::string>();
    for (const auto& tj : j.at("things")) {
      ThingKind t;
      t.id = tj.at("id").get<std::string>();
      for (const auto& fj : tj.at("fields")) {
        PayloadField f;
        f.name = fj.at("name").get<std::string>();
        f.domain = domain_from_json(fj.at("domain"));
        if (!fj.at("default").is_null()) f.fallback = value_from_json(fj.at("default"));
        t.fields.push_back(std::move(f));
      }
      m.things.push_back(std::move(t));
    }
    for (const auto& mj : j.at("machines")) {
      Machine mc;
      mc.id = mj.at("id").get<std::string>();
      mc.name = mj.at("name").get<std::string>();
      if (!mj.at("parent").is_null()) mc.parent = mj.at("parent").get<std::string>();
      if (!mj.at("placement").is_null()) mc.placement = stage_from_json(mj.at("placement"));
      for (const auto& s : mj.at("stages")) mc.stages.push_back(stage_from_json(s));
      for (const auto& aj : mj.at("attributes")) {
        Attribute a;
        a.name = aj.at("name").get<std::string>();
        a.domain = domain_from_json(aj.at("domain"));
        a.initial = value_from_json(aj.at("initial"));
        a.is_process = aj.at("process").get<bool>();
        mc.attributes.push_back(std::move(a));
      }
      for (const auto& rj : mj.at("residents"))
        mc.residents.push_back({rj.at("thing").get<std::string>(), stage_from_json(rj.at("stage"))});
      m.machines.push_back(std::move(mc));
    }
    for (const auto& ej : j.at("edges")) {
      Edge e;
      e.id = ej.at("id").get<std::string>();
      e.named = ej.at("named").get<bool>();
      const std::string kind = ej.at("kind").get<std::string>();
      if (kind != "flow" && kind != "trigger") throw Error(code::kParse, "unknown edge kind '" + kind + "'");
      e.kind = kind == "flow" ? EdgeKind::Flow : EdgeKind::Trigger;
      e.source = stage_ref_from(ej.at("source").get<std::string>());
      e.target = stage_ref_from(ej.at("target").get<std::string>());
      if (!ej.at("carries").is_null()) e.carries = ej.at("carries").get<std::string>();
      if (!ej.at("guard").is_null()) {
        const auto& gj = ej.at("guard");
        Guard g;
        g.subject = gj.at("subject").get<std::string>();
        g.op = gj.at("op").get<std::string>() == "=" ? Guard::Op::Eq : Guard::Op::Ne;
        g.literal = value_from_json(gj.at("literal"));
        e.guard = std::move(g);
      }
      m.edges.push_back(std::move(e));
    }
    for (const auto& vj : j.at("events")) {
      Event ev;
      ev.id = vj.at("id").get<std::string>();
      ev.label = vj.at("label").get<std::string>();
      for (const auto& el : vj.at("elements")) ev.elements.push_back(element_from_json(el));
      ev.anchor = element_from_json(vj.at("anchor"));
      m.events.push_back(std::move(ev));
    }
    if (!j.at("behavior").is_null()) {
      BehaviorGraph g;
      for (const auto& aj : j.at("behavior").at("arcs"))
        g.arcs.push_back({aj.at("from").get<std::string>(), aj.at("to").get<std::string>(), aj.at("loop").get<bool>()});
      m.behavior = std::move(g);
    }
    for (const auto& dj : j.at("declaration_order"))
      m.declaration_order.push_back({decl_kind_from(dj.at("kind").get<std::string>()), dj.at("id").get<std::string>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(code::kParse, std::string("malformed model JSON: ") + e.what());
  }
}

std::string to_json(const Model& m) { return dump_json(model_to_json(m)); }

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json scenario_to_json(const Scenario& sc) {
  Json j;
  j["name"] = sc.name;
  j["mode"] = sc.mode == ChoiceMode::Strict ? "strict" : "explore";
  j["seed"] = sc.seed;
  Json choices = Json::array();
  for (const auto& c : sc.choices) choices.push_back(Json{{"label", c.label}, {"value", c.value}});
  j["choices"] = std::move(choices);
  Json actions = Json::array();
  for (const auto& a : sc.actions) {
    Json aj;
    switch (a.type) {
      case Action::Type::SetAttribute:
        aj["type"] = "set_attribute";
        aj["path"] = a.path;
        aj["value"] = a.value ? value_to_json(*a.value) : Json(nullptr);
        break;
      case Action::Type::ClickStage:
        aj["type"] = "click_stage";
        aj["path"] = a.path;
        break;
      case Action::Type::Inject:
        aj["type"] = "inject";
        aj["thing"] = a.thing;
        aj["at"] = a.path;
        aj["payload"] = payload_json(a.payload);
        break;
    }
    actions.push_back(std::move(aj));
  }
  j["actions"] = std::move(actions);
  return j;
}

Json steplog_to_json(const StepLog& log) {
  Json j;
  j["model_hash"] = log.model_hash;
  j["scenario"] = scenario_to_json(log.scenario);
  Json steps = Json::array();
  for (const auto& s : log.steps) {
    Json sj;
    sj["index"] = s.index;
    sj["time"] = s.time;
    sj["kind"] = step_kind_name(s.kind);
    sj["token"] = s.token ? Json(*s.token) : Json(nullptr);
    sj["element"] = s.element;
    sj["from"] = stage_json(s.from);
    sj["to"] = stage_json(s.to);
    sj["fired_triggers"] = s.fired_triggers;
    Json created = Json::array();
    for (const auto& c : s.created)
      created.push_back(
          Json{{"token", c.token}, {"kind", c.kind}, {"stage", c.stage.id()}, {"payload", payload_json(c.payload)}});
    sj["created"] = std::move(created);
    sj["woken"] = s.woken;
    sj["value"] = s.value ? value_to_json(*s.value) : Json(nullptr);
    steps.push_back(std::move(sj));
  }
  j["steps"] = std::move(steps);
  return j;
}

Json trace_to_json(const EventTrace& trace) {
  Json j = Json::array();
  for (const auto& o : trace.occurrences) {
    Json oj;
    oj["event"] = o.event;
    oj["time"] = o.time;
    oj["step"] = o.step;
    oj["token"] = o.token ? Json(*o.token) : Json(nullptr);
    oj["stage"] = o.stage;
    j.push_back(std::move(oj));
  }
  return j;
}

Json conformance_to_json(const ConformanceReport& report) {
  Json j;
  j["conformant"] = report.conformant();
  Json v = Json::array();
  for (const auto& x : report.violations)
    v.push_back(Json{{"position", x.position}, {"event", x.event}, {"missing", x.missing}});
  j["violations"] = std::move(v);
  return j;
}

Json anomalies_to_json(const std::vector<Anomaly>& anomalies, const Model& model) {
  Json j = Json::array();
  for (const auto& a : anomalies) {
    Json aj;
    aj["rule"] = a.rule;
    aj["token"] = a.token;
    aj["from"] = display_path(model, a.from);
    aj["expected"] = display_path(model, a.expected);
    aj["window"] = a.window;
    aj["detected_at"] = a.detected_at;
    aj["step"] = a.step;
    j.push_back(std::move(aj));
  }
  return j;
}

Json diagnostics_to_json(const std::vector<Diagnostic>& diags) {
  Json j = Json::array();
  for (const auto& d : diags) {
    Json dj;
    dj["severity"] = d.severity == Severity::Error ? "error" : "warning";
    dj["code"] = d.code;
    dj["message"] = d.message;
    if (d.span) {
      dj["span"] = Json{{"file", d.span->file},
                        {"start_line", d.span->start_line},
                        {"start_col", d.span->start_col},
                        {"end_line", d.span->end_line},
                        {"end_col", d.span->end_col}};
    } else {
      dj["span"] = nullptr;
    }
    dj["element"] = d.element ? Json(*d.element) : Json(nullptr);
    j.push_back(std::move(dj));
  }
  return j;
}

}  // namespace tmkit
