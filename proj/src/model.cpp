#include "tm/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <deque>
#include <functional>
#include <sstream>

namespace tmkit {

std::string_view stage_name(StageKind kind) {
  switch (kind) {
    case StageKind::Create: return "Create";
    case StageKind::Process: return "Process";
    case StageKind::Release: return "Release";
    case StageKind::Transfer: return "Transfer";
    case StageKind::Receive: return "Receive";
  }
  return "?";
}

std::string_view stage_keyword(StageKind kind) {
  switch (kind) {
    case StageKind::Create: return "create";
    case StageKind::Process: return "process";
    case StageKind::Release: return "release";
    case StageKind::Transfer: return "transfer";
    case StageKind::Receive: return "receive";
  }
  return "?";
}

std::optional<StageKind> parse_stage(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (StageKind k : kAllStages) {
    if (stage_keyword(k) == lower) return k;
  }
  return std::nullopt;
}

std::string value_to_string(const Value& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

std::string format_diagnostic(const Diagnostic& d) {
  std::ostringstream out;
  if (d.span) {
    out << (d.span->file.empty() ? "<input>" : d.span->file) << ':' << d.span->start_line << ':'
        << d.span->start_col << ": ";
  }
  out << (d.severity == Severity::Error ? "error" : "warning") << '[' << d.code << "]: " << d.message;
  if (d.element) out << " (" << *d.element << ')';
  return out.str();
}

// ---------------------------------------------------------------------------
// Domain

Domain Domain::enumeration(std::vector<std::string> values) {
  Domain d;
  d.type = Type::Enum;
  d.values = std::move(values);
  return d;
}

Domain Domain::boolean() { return Domain{}; }

Domain Domain::integer(std::int64_t lo, std::int64_t hi) {
  Domain d;
  d.type = Type::Int;
  d.min = lo;
  d.max = hi;
  return d;
}

bool Domain::type_matches(const Value& v) const {
  switch (type) {
    case Type::Enum: return std::holds_alternative<std::string>(v);
    case Type::Bool: return std::holds_alternative<bool>(v);
    case Type::Int: return std::holds_alternative<std::int64_t>(v);
  }
  return false;
}

bool Domain::contains(const Value& v) const {
  if (!type_matches(v)) return false;
  switch (type) {
    case Type::Enum:
      return std::find(values.begin(), values.end(), std::get<std::string>(v)) != values.end();
    case Type::Bool: return true;
    case Type::Int: {
      auto i = std::get<std::int64_t>(v);
      return i >= min && i <= max;
    }
  }
  return false;
}

std::vector<Value> Domain::enumerate() const {
  std::vector<Value> out;
  switch (type) {
    case Type::Enum:
      for (const auto& s : values) out.emplace_back(s);
      break;
    case Type::Bool:
      out.emplace_back(false);
      out.emplace_back(true);
      break;
    case Type::Int:
      for (auto i = min; i <= max && out.size() < 4096; ++i) out.emplace_back(i);
      break;
  }
  return out;
}

std::optional<Value> Domain::coerce(std::string_view text) const {
  switch (type) {
    case Type::Enum: return Value{std::string(text)};
    case Type::Bool:
      if (text == "true") return Value{true};
      if (text == "false") return Value{false};
      return std::nullopt;
    case Type::Int: {
      std::int64_t i = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
      if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
      return Value{i};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Lookups

const PayloadField* ThingKind::field(std::string_view n) const {
  for (const auto& f : fields)
    if (f.name == n) return &f;
  return nullptr;
}

bool Machine::has_stage(StageKind kind) const {
  return std::find(stages.begin(), stages.end(), kind) != stages.end();
}

const Attribute* Machine::attribute(std::string_view n) const {
  for (const auto& a : attributes)
    if (a.name == n) return &a;
  return nullptr;
}

std::string StageRef::id() const { return machine + "." + std::string(stage_name(kind)); }

std::string derived_edge_id(const StageRef& src, const StageRef& dst, EdgeKind kind) {
  return src.id() + (kind == EdgeKind::Flow ? "->" : "~>") + dst.id();
}

std::string ElementRef::id() const {
  switch (kind) {
    case Kind::Machine: return machine;
    case Kind::Stage: return stage_ref().id();
    case Kind::Attribute: return machine + "." + name;
    default: return name;
  }
}

bool Region::contains(const ElementRef& e) const {
  if (e.kind == ElementRef::Kind::Stage) return stages.count(e.stage_ref()) > 0;
  if (e.kind == ElementRef::Kind::Edge) return edges.count(e.name) > 0;
  return false;
}

const Machine* Model::machine(std::string_view id) const {
  for (const auto& m : machines)
    if (m.id == id) return &m;
  return nullptr;
}

Machine* Model::machine(std::string_view id) {
  for (auto& m : machines)
    if (m.id == id) return &m;
  return nullptr;
}

const ThingKind* Model::thing(std::string_view id) const {
  for (const auto& t : things)
    if (t.id == id) return &t;
  return nullptr;
}

const Edge* Model::edge(std::string_view id) const {
  for (const auto& e : edges)
    if (e.id == id) return &e;
  return nullptr;
}

const Event* Model::event(std::string_view id) const {
  for (const auto& e : events)
    if (e.id == id) return &e;
  return nullptr;
}

std::vector<const Machine*> Model::children(std::string_view id) const {
  std::vector<const Machine*> out;
  for (const auto& m : machines)
    if (m.parent && *m.parent == id) out.push_back(&m);
  return out;
}

std::vector<const Machine*> Model::roots() const {
  std::vector<const Machine*> out;
  for (const auto& m : machines)
    if (!m.parent) out.push_back(&m);
  return out;
}

BehaviorGraph Model::behavior_graph() const {
  BehaviorGraph g;
  for (const auto& e : events) g.nodes.push_back(e.id);
  if (behavior) g.arcs = behavior->arcs;
  return g;
}

bool Model::structurally_equal(const Model& o) const {
  return name == o.name && navigator == o.navigator && machines == o.machines &&
         things == o.things && edges == o.edges && events == o.events &&
         behavior == o.behavior && declaration_order == o.declaration_order;
}

// ---------------------------------------------------------------------------
// Adjacency

bool adjacency_allowed(StageKind src, StageKind dst, bool same_machine) {
  using S = StageKind;
  if (!same_machine) return src == S::Transfer && dst == S::Transfer;
  switch (src) {
    case S::Create: return dst == S::Process || dst == S::Release;
    case S::Receive: return dst == S::Process || dst == S::Release;
    case S::Process: return dst == S::Create || dst == S::Release;
    case S::Release: return dst == S::Transfer;
    case S::Transfer: return dst == S::Receive;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Paths

namespace {

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto dot = path.find('.', start);
    out.emplace_back(path.substr(start, dot == std::string_view::npos ? dot : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return out;
}

void descend(const Model& model, const Machine& m, const std::vector<std::string>& segs,
             std::size_t i, std::vector<ElementRef>& out) {
  if (i == segs.size()) {
    out.push_back({ElementRef::Kind::Machine, m.id, StageKind::Create, {}});
    return;
  }
  const auto& seg = segs[i];
  const bool last = i + 1 == segs.size();
  if (last) {
    if (auto k = parse_stage(seg)) {
      if (m.has_stage(*k)) out.push_back(ElementRef::of_stage({m.id, *k}));
      return;
    }
    if (m.attribute(seg)) {
      out.push_back({ElementRef::Kind::Attribute, m.id, StageKind::Create, seg});
      return;
    }
  }
  for (const Machine* child : model.children(m.id))
    if (child->name == seg) descend(model, *child, segs, i + 1, out);
}

}  // namespace

ElementRef resolve_path(const Model& model, std::string_view path) {
  if (path.empty()) throw Error(code::kNoPath, "empty path");
  auto segs = split_path(path);
  for (const auto& s : segs)
    if (s.empty()) throw Error(code::kNoPath, "malformed path '" + std::string(path) + "'");

  std::vector<ElementRef> found;
  for (const auto& m : model.machines)
    if (m.name == segs[0]) descend(model, m, segs, 1, found);

  if (found.empty() && segs.size() == 1 && model.thing(segs[0]))
    return {ElementRef::Kind::Thing, {}, StageKind::Create, segs[0]};
  if (found.empty()) throw Error(code::kNoPath, "no element at path '" + std::string(path) + "'");
  if (found.size() > 1) throw Error(code::kAmbiguous, "path '" + std::string(path) + "' is ambiguous");
  return found.front();
}

namespace {

std::vector<std::string> name_chain(const Model& model, const std::string& machine_id) {
  std::vector<std::string> chain;
  const Machine* m = model.machine(machine_id);
  while (m) {
    chain.push_back(m->name);
    m = m->parent ? model.machine(*m->parent) : nullptr;
    if (chain.size() > model.machines.size()) break;
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

}  // namespace

std::string display_path(const Model& model, const ElementRef& ref) {
  if (ref.kind == ElementRef::Kind::Thing || ref.kind == ElementRef::Kind::Edge ||
      ref.kind == ElementRef::Kind::Event)
    return ref.name;
  auto chain = name_chain(model, ref.machine);
  std::string tail;
  if (ref.kind == ElementRef::Kind::Stage) tail = "." + std::string(stage_name(ref.stage));
  if (ref.kind == ElementRef::Kind::Attribute) tail = "." + ref.name;
  for (std::size_t k = chain.size(); k-- > 0;) {
    std::string candidate;
    for (std::size_t i = k; i < chain.size(); ++i) {
      if (i > k) candidate += '.';
      candidate += chain[i];
    }
    candidate += tail;
    try {
      if (resolve_path(model, candidate) == ref) return candidate;
    } catch (const Error&) {
    }
  }
  return ref.id();
}

std::string display_path(const Model& model, const StageRef& ref) {
  return display_path(model, ElementRef::of_stage(ref));
}

// ---------------------------------------------------------------------------
// Graph queries

std::set<StageRef> reachable_stages(const Model& model, const StageRef& start) {
  std::set<StageRef> seen{start};
  std::deque<StageRef> queue{start};
  while (!queue.empty()) {
    StageRef cur = queue.front();
    queue.pop_front();
    for (const auto& e : model.edges) {
      if (e.source == cur && seen.insert(e.target).second) queue.push_back(e.target);
    }
  }
  return seen;
}

namespace {

bool stage_exists(const Model& model, const StageRef& s) {
  const Machine* m = model.machine(s.machine);
  return m && m->has_stage(s.kind);
}

}  // namespace

Region subdiagram(const Model& model, const std::set<ElementRef>& elements) {
  Region r;
  for (const auto& el : elements) {
    if (el.kind == ElementRef::Kind::Stage) {
      if (!stage_exists(model, el.stage_ref()))
        throw Error(code::kNoElement, "unknown stage '" + el.id() + "'");
      r.stages.insert(el.stage_ref());
    } else if (el.kind == ElementRef::Kind::Edge) {
      const Edge* e = model.edge(el.name);
      if (!e) throw Error(code::kNoElement, "unknown edge '" + el.name + "'");
      r.edges.insert(e->id);
      r.stages.insert(e->source);
      r.stages.insert(e->target);
    } else {
      throw Error(code::kNoElement, "'" + el.id() + "' is not a stage or edge");
    }
  }
  return r;
}

Region subdiagram(const Model& model, const Region& region) {
  std::set<ElementRef> els;
  for (const auto& s : region.stages) els.insert(ElementRef::of_stage(s));
  for (const auto& e : region.edges) els.insert(ElementRef::of_edge(e));
  return subdiagram(model, els);
}

// ---------------------------------------------------------------------------
// Validation

namespace {

class Validator {
 public:
  explicit Validator(const Model& m) : model_(m) {}

  std::vector<Diagnostic> run() {
    check_declarations();
    check_machines();
    check_things();
    check_edges();
    check_events();
    check_behavior();
    if (!has_errors(diags_)) check_reachability();
    return std::move(diags_);
  }

 private:
  void report(Severity sev, const char* code, std::string msg, const std::string& element) {
    Diagnostic d{sev, code, std::move(msg), std::nullopt, element};
    if (auto it = model_.spans.find(element); it != model_.spans.end()) d.span = it->second;
    diags_.push_back(std::move(d));
  }
  void error(const char* code, std::string msg, const std::string& element) {
    report(Severity::Error, code, std::move(msg), element);
  }

  void check_declarations() {
    std::map<std::pair<Decl::Kind, std::string>, int> count;
    for (const auto& d : model_.declaration_order) ++count[{d.kind, d.id}];
    auto expect = [&](Decl::Kind k, const std::string& id) {
      auto it = count.find({k, id});
      if (it == count.end()) {
        error(code::kNoElement, "element missing from declaration order", id);
      } else {
        if (it->second > 1) error(code::kDuplicate, "element listed twice in declaration order", id);
        count.erase(it);
      }
    };
    for (const auto& t : model_.things) expect(Decl::Kind::Thing, t.id);
    for (const auto& m : model_.machines) expect(Decl::Kind::Machine, m.id);
    for (const auto& e : model_.edges) expect(Decl::Kind::Edge, e.id);
    for (const auto& e : model_.events) expect(Decl::Kind::Event, e.id);
    if (model_.behavior) expect(Decl::Kind::Behavior, "behavior");
    for (const auto& [key, n] : count)
      error(code::kNoElement, "declaration order names an unknown element", key.second);
  }

  void check_machines() {
    std::set<std::string> ids;
    for (const auto& m : model_.machines) {
      if (!ids.insert(m.id).second) error(code::kDuplicate, "duplicate machine id", m.id);
      if (parse_stage(m.name) || m.name == kThingSubject)
        error(code::kParse, "machine name '" + m.name + "' is reserved", m.id);
    }
    auto roots = model_.roots();
    if (roots.size() != 1)
      error(code::kParse, "model must have exactly one root machine, found " + std::to_string(roots.size()),
            model_.name);

    // Parent links: existence, sibling names, and acyclicity by walking up.
    std::map<std::pair<std::string, std::string>, int> sibling_names;
    for (const auto& m : model_.machines) {
      ++sibling_names[{m.parent.value_or(""), m.name}];
      if (m.parent && !model_.machine(*m.parent)) {
        error(code::kNoPath, "unknown parent machine '" + *m.parent + "'", m.id);
        continue;
      }
      const Machine* cur = &m;
      std::size_t hops = 0;
      while (cur && cur->parent && hops <= model_.machines.size()) {
        cur = model_.machine(*cur->parent);
        ++hops;
      }
      if (hops > model_.machines.size()) error(code::kCycle, "machine nesting forms a cycle", m.id);
      if (m.placement) {
        const Machine* parent = m.parent ? model_.machine(*m.parent) : nullptr;
        if (!parent || !parent->has_stage(*m.placement))
          error(code::kNoPath, "placement stage not declared by the parent machine", m.id);
      }
    }
    for (const auto& [key, n] : sibling_names)
      if (n > 1) error(code::kDuplicate, "sibling machines share the name '" + key.second + "'", key.first);

    for (const auto& m : model_.machines) {
      std::set<StageKind> stages;
      for (StageKind k : m.stages)
        if (!stages.insert(k).second)
          error(code::kDuplicate, "stage " + std::string(stage_name(k)) + " declared twice", m.id);
      std::set<std::string> attrs;
      for (const auto& a : m.attributes) {
        const std::string id = m.id + "." + a.name;
        if (!attrs.insert(a.name).second) error(code::kDuplicate, "duplicate attribute", id);
        if (!a.domain.contains(a.initial))
          error(code::kDomain, "initial value " + value_to_string(a.initial) + " is outside the domain", id);
      }
      for (const auto& r : m.residents) {
        if (!model_.thing(r.thing)) error(code::kNoPath, "resident names unknown thing '" + r.thing + "'", m.id);
        if (!m.has_stage(r.stage))
          error(code::kNoPath, "resident placed at undeclared stage " + std::string(stage_name(r.stage)), m.id);
      }
    }
  }

  void check_things() {
    std::set<std::string> ids;
    for (const auto& t : model_.things) {
      if (!ids.insert(t.id).second) error(code::kDuplicate, "duplicate thing id", t.id);
      std::set<std::string> fields;
      for (const auto& f : t.fields) {
        if (!fields.insert(f.name).second) error(code::kDuplicate, "duplicate payload field", t.id + "." + f.name);
        if (f.name == kThingSubject) error(code::kParse, "payload field name 'thing' is reserved", t.id);
        if (f.fallback && !f.domain.contains(*f.fallback))
          error(code::kDomain, "default value outside the field domain", t.id + "." + f.name);
      }
    }
    if (model_.navigator && !model_.thing(*model_.navigator))
      error(code::kNoPath, "navigator names unknown thing '" + *model_.navigator + "'", *model_.navigator);
  }

  void check_guard(const Edge& e) {
    const Guard& g = *e.guard;
    if (g.is_attribute()) {
      ElementRef ref;
      try {
        ref = resolve_path(model_, g.subject);
      } catch (const Error& err) {
        error(err.code() == code::kAmbiguous ? code::kAmbiguous : code::kNoPath,
              "guard subject: " + std::string(err.what()), e.id);
        return;
      }
      if (ref.kind != ElementRef::Kind::Attribute) {
        error(code::kNoPath, "guard subject '" + g.subject + "' is not an attribute", e.id);
        return;
      }
      const Attribute* a = model_.machine(ref.machine)->attribute(ref.name);
      if (!a->domain.contains(g.literal))
        error(code::kGuardType, "literal " + value_to_string(g.literal) + " does not fit " + g.subject, e.id);
      return;
    }
    if (g.subject == kThingSubject) {
      const auto* s = std::get_if<std::string>(&g.literal);
      if (!s || !model_.thing(*s)) error(code::kGuardType, "thing guard must name a declared thing", e.id);
      return;
    }
    // Payload field: of the carried thing on flows, of any thing otherwise.
    std::vector<const PayloadField*> candidates;
    if (e.kind == EdgeKind::Flow && e.carries) {
      if (const ThingKind* t = model_.thing(*e.carries))
        if (const PayloadField* f = t->field(g.subject)) candidates.push_back(f);
    } else {
      for (const auto& t : model_.things)
        if (const PayloadField* f = t.field(g.subject)) candidates.push_back(f);
    }
    if (candidates.empty()) {
      error(code::kGuardType, "no carried thing has payload field '" + g.subject + "'", e.id);
      return;
    }
    bool fits = std::any_of(candidates.begin(), candidates.end(),
                            [&](const PayloadField* f) { return f->domain.contains(g.literal); });
    if (!fits)
      error(code::kGuardType, "literal " + value_to_string(g.literal) + " does not fit field " + g.subject, e.id);
  }

  void check_edges() {
    std::set<std::string> ids;
    for (const auto& e : model_.edges) {
      if (!ids.insert(e.id).second) error(code::kDuplicate, "duplicate edge id", e.id);
      bool ends_ok = true;
      for (const StageRef* s : {&e.source, &e.target}) {
        if (!stage_exists(model_, *s)) {
          error(code::kNoPath, "edge endpoint '" + s->id() + "' does not resolve", e.id);
          ends_ok = false;
        }
      }
      if (e.carries && !model_.thing(*e.carries))
        error(code::kNoPath, "edge carries unknown thing '" + *e.carries + "'", e.id);
      if (!ends_ok) continue;

      const bool same = e.source.machine == e.target.machine;
      if (e.kind == EdgeKind::Flow && !adjacency_allowed(e.source.kind, e.target.kind, same)) {
        std::string pair = std::string(stage_name(e.source.kind)) + "->" + std::string(stage_name(e.target.kind));
        if (same)
          error(code::kAdjacency, "flow " + pair + " is not a legal stage succession", e.id);
        else
          error(code::kBoundary, "cross-machine flow " + pair + " must connect Transfer to Transfer", e.id);
      }
      if (e.kind == EdgeKind::Trigger) {
        if (e.source.kind != StageKind::Process && e.source.kind != StageKind::Create)
          report(Severity::Warning, code::kTriggerSource,
                 "trigger originates at " + std::string(stage_name(e.source.kind)) + ", not Process or Create",
                 e.id);
        if (e.target.kind == StageKind::Create && !e.carries)
          error(code::kNoPath, "trigger into Create must name the thing it creates", e.id);
      }
      if (e.guard) check_guard(e);
    }
  }

  void check_events() {
    std::set<std::string> ids;
    for (const auto& ev : model_.events) {
      if (!ids.insert(ev.id).second) error(code::kDuplicate, "duplicate event id", ev.id);
      if (ev.elements.empty()) {
        error(code::kRegionEmpty, "event region is empty", ev.id);
        continue;
      }
      Region r;
      try {
        r = subdiagram(model_, std::set<ElementRef>(ev.elements.begin(), ev.elements.end()));
      } catch (const Error& err) {
        error(code::kNoPath, err.what(), ev.id);
        continue;
      }
      if (!r.contains(ev.anchor)) error(code::kAnchor, "anchor '" + ev.anchor.id() + "' is outside the region", ev.id);
    }
  }

  void check_behavior() {
    if (!model_.behavior) return;
    bool refs_ok = true;
    for (const auto& a : model_.behavior->arcs) {
      for (const std::string* id : {&a.from, &a.to}) {
        if (!model_.event(*id)) {
          error(code::kNoPath, "behavior arc names unknown event '" + *id + "'", "behavior");
          refs_ok = false;
        }
      }
    }
    if (!refs_ok) return;
    // Kahn over non-loop arcs.
    std::map<std::string, int> indeg;
    for (const auto& e : model_.events) indeg[e.id] = 0;
    for (const auto& a : model_.behavior->arcs)
      if (!a.loop) ++indeg[a.to];
    std::deque<std::string> ready;
    for (const auto& [id, d] : indeg)
      if (d == 0) ready.push_back(id);
    std::size_t visited = 0;
    while (!ready.empty()) {
      auto id = ready.front();
      ready.pop_front();
      ++visited;
      for (const auto& a : model_.behavior->arcs)
        if (!a.loop && a.from == id && --indeg[a.to] == 0) ready.push_back(a.to);
    }
    if (visited != indeg.size()) error(code::kCycle, "behavior graph has a cycle not flagged as loop", "behavior");
  }

  void check_reachability() {
    std::set<StageRef> seeds;
    for (const auto& m : model_.machines) {
      if (m.has_stage(StageKind::Create)) seeds.insert({m.id, StageKind::Create});
      for (const auto& r : m.residents) seeds.insert({m.id, r.stage});
    }
    auto roots = model_.roots();
    if (model_.navigator && roots.size() == 1 && roots[0]->has_stage(StageKind::Transfer))
      seeds.insert({roots[0]->id, StageKind::Transfer});
    std::set<StageRef> reached;
    for (const auto& s : seeds) {
      auto part = reachable_stages(model_, s);
      reached.insert(part.begin(), part.end());
    }
    for (const auto& m : model_.machines)
      for (StageKind k : m.stages) {
        StageRef s{m.id, k};
        if (!reached.count(s))
          report(Severity::Warning, code::kUnreachable, "stage is unreachable from any Create or resident", s.id());
      }
  }

  const Model& model_;
  std::vector<Diagnostic> diags_;
};

}  // namespace

std::vector<Diagnostic> validate(const Model& model) { return Validator(model).run(); }

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

}  // namespace tmkit
