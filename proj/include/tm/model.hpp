#pragma once

// Thinging-machine model IR: machines with up to five stages, things that
// flow between stages, flow/trigger edges, and events over regions of the
// diagram.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tm/diagnostic.hpp"

namespace tmkit {

enum class StageKind : std::uint8_t { Create, Process, Release, Transfer, Receive };

inline constexpr std::array<StageKind, 5> kAllStages = {
    StageKind::Create, StageKind::Process, StageKind::Release, StageKind::Transfer,
    StageKind::Receive};

/// Capitalized name as drawn in diagrams ("Transfer").
std::string_view stage_name(StageKind kind);
/// Lowercase source keyword ("transfer").
std::string_view stage_keyword(StageKind kind);
/// Case-insensitive lookup of a stage keyword.
std::optional<StageKind> parse_stage(std::string_view text);

using Value = std::variant<bool, std::int64_t, std::string>;

std::string value_to_string(const Value& v);

struct Domain {
  enum class Type : std::uint8_t { Enum, Bool, Int };
  Type type = Type::Bool;
  std::vector<std::string> values;  // Enum only
  std::int64_t min = 0;             // Int only
  std::int64_t max = 0;

  static Domain enumeration(std::vector<std::string> values);
  static Domain boolean();
  static Domain integer(std::int64_t lo, std::int64_t hi);

  bool contains(const Value& v) const;
  /// Same variant alternative as this domain's values, regardless of range.
  bool type_matches(const Value& v) const;
  /// Every value in the domain, in declaration order (ints ascending).
  std::vector<Value> enumerate() const;
  /// Interprets a bare literal (scenario text, HTTP strings) in this domain.
  std::optional<Value> coerce(std::string_view text) const;

  bool operator==(const Domain&) const = default;
};

struct Attribute {
  std::string name;
  Domain domain;
  Value initial;
  bool is_process = false;  // listed among a machine's available processes

  bool operator==(const Attribute&) const = default;
};

struct PayloadField {
  std::string name;
  Domain domain;
  std::optional<Value> fallback;  // value used when no choice supplies one

  bool operator==(const PayloadField&) const = default;
};

struct ThingKind {
  std::string id;
  std::vector<PayloadField> fields;

  const PayloadField* field(std::string_view name) const;
  bool operator==(const ThingKind&) const = default;
};

struct Resident {
  std::string thing;
  StageKind stage = StageKind::Create;
  bool operator==(const Resident&) const = default;
};

struct Machine {
  std::string id;    // dotted path of names from the root
  std::string name;
  std::optional<std::string> parent;
  std::optional<StageKind> placement;  // parent stage this machine sits in
  std::vector<StageKind> stages;       // declaration order
  std::vector<Attribute> attributes;
  std::vector<Resident> residents;

  bool has_stage(StageKind kind) const;
  const Attribute* attribute(std::string_view name) const;
  bool operator==(const Machine&) const = default;
};

struct StageRef {
  std::string machine;
  StageKind kind = StageKind::Create;

  std::string id() const;  // "Root.Sub.Transfer"
  auto operator<=>(const StageRef&) const = default;
};

enum class EdgeKind : std::uint8_t { Flow, Trigger };

struct Guard {
  enum class Op : std::uint8_t { Eq, Ne };
  std::string subject;  // payload field, "thing", or dotted attribute path
  Op op = Op::Eq;
  Value literal;

  bool is_attribute() const { return subject.find('.') != std::string::npos; }
  bool operator==(const Guard&) const = default;
};

/// Reserved guard subject comparing against the token's thing kind.
inline constexpr std::string_view kThingSubject = "thing";

struct Edge {
  std::string id;
  bool named = false;  // id written in source rather than derived
  StageRef source;
  StageRef target;
  EdgeKind kind = EdgeKind::Flow;
  std::optional<std::string> carries;
  std::optional<Guard> guard;

  bool operator==(const Edge&) const = default;
};

/// Id assigned to an edge written without a name.
std::string derived_edge_id(const StageRef& src, const StageRef& dst, EdgeKind kind);

struct ElementRef {
  enum class Kind : std::uint8_t { Machine, Stage, Attribute, Thing, Edge, Event };
  Kind kind = Kind::Machine;
  std::string machine;  // Machine/Stage/Attribute
  StageKind stage = StageKind::Create;
  std::string name;  // attribute, thing, edge or event id

  static ElementRef of_stage(const StageRef& s) { return {Kind::Stage, s.machine, s.kind, {}}; }
  static ElementRef of_edge(std::string id) { return {Kind::Edge, {}, StageKind::Create, std::move(id)}; }

  StageRef stage_ref() const { return {machine, stage}; }
  /// Element id: stage "A.B.Release", attribute "A.B.state", or the plain name.
  std::string id() const;
  auto operator<=>(const ElementRef&) const = default;
};

struct Event {
  std::string id;
  std::string label;
  std::vector<ElementRef> elements;  // region as written (stages and edges)
  ElementRef anchor;

  bool operator==(const Event&) const = default;
};

struct BehaviorArc {
  std::string from;
  std::string to;
  bool loop = false;
  bool operator==(const BehaviorArc&) const = default;
};

struct BehaviorGraph {
  std::vector<std::string> nodes;
  std::vector<BehaviorArc> arcs;
  bool operator==(const BehaviorGraph&) const = default;
};

struct Decl {
  enum class Kind : std::uint8_t { Thing, Machine, Edge, Event, Behavior };
  Kind kind = Kind::Thing;
  std::string id;
  bool operator==(const Decl&) const = default;
};

/// Closed set of stages and edges.
struct Region {
  std::set<StageRef> stages;
  std::set<std::string> edges;

  bool empty() const { return stages.empty() && edges.empty(); }
  bool contains(const ElementRef& e) const;
  bool operator==(const Region&) const = default;
};

struct Model {
  std::string name;
  std::optional<std::string> navigator;  // thing kind of the interactive token
  std::vector<Machine> machines;         // preorder
  std::vector<ThingKind> things;
  std::vector<Edge> edges;
  std::vector<Event> events;
  std::optional<BehaviorGraph> behavior;  // arcs; nodes are the declared events
  std::vector<Decl> declaration_order;

  // Not part of structural equality.
  std::map<std::string, SourceSpan> spans;

  const Machine* machine(std::string_view id) const;
  Machine* machine(std::string_view id);
  const ThingKind* thing(std::string_view id) const;
  const Edge* edge(std::string_view id) const;
  const Event* event(std::string_view id) const;
  std::vector<const Machine*> children(std::string_view id) const;
  std::vector<const Machine*> roots() const;
  /// Behavior graph with nodes filled from the declared events.
  BehaviorGraph behavior_graph() const;

  bool structurally_equal(const Model& other) const;
};

// ---------------------------------------------------------------------------
// Structural operations.

/// Membership in the fixed stage succession table.
bool adjacency_allowed(StageKind src, StageKind dst, bool same_machine);

std::vector<Diagnostic> validate(const Model& model);
bool has_errors(const std::vector<Diagnostic>& diags);

/// Resolves a dotted path through the machine forest. The first segment may
/// name a machine at any depth; later segments descend through children.
/// Throws Error(E_NOPATH | E_AMBIG).
ElementRef resolve_path(const Model& model, std::string_view path);

/// Shortest dotted path that resolves back to the same element.
std::string display_path(const Model& model, const ElementRef& ref);
std::string display_path(const Model& model, const StageRef& ref);

std::set<StageRef> reachable_stages(const Model& model, const StageRef& start);

/// Throws Error(E_NOELEM) for unknown ids.
Region subdiagram(const Model& model, const std::set<ElementRef>& elements);
Region subdiagram(const Model& model, const Region& region);

}  // namespace tmkit
