#include "tm/sim.hpp"

#include <algorithm>
#include <limits>

#include "tm/dsl.hpp"
#include "tm/hash.hpp"

namespace tmkit {

std::string model_hash(const Model& model) { return sha256_hex(serialize(model)); }

namespace {

bool same_text_ci(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) return false;
  return true;
}

std::string attribute_key(const std::string& machine, const std::string& name) { return machine + "." + name; }

// Strings arriving from scenario text or HTTP are reinterpreted in the domain.
std::optional<Value> fit_value(const Domain& d, const Value& v) {
  if (d.type_matches(v)) return d.contains(v) ? std::optional<Value>(v) : std::nullopt;
  if (const auto* s = std::get_if<std::string>(&v)) {
    auto c = d.coerce(*s);
    if (c && d.contains(*c)) return c;
  }
  return std::nullopt;
}

}  // namespace

SimState::SimState(std::shared_ptr<const Model> model, Scenario scenario) : model_(std::move(model)) {
  log_.model_hash = model_hash(*model_);
  log_.scenario = std::move(scenario);
  core_.used_choices.assign(log_.scenario.choices.size(), false);
  core_.rng.seed(log_.scenario.seed);
  for (const auto& m : model_->machines)
    for (const auto& a : m.attributes) core_.attributes[attribute_key(m.id, a.name)] = a.initial;
  for (const auto& m : model_->machines) {
    for (const auto& r : m.residents) {
      const ThingKind* kind = model_->thing(r.thing);
      spawn(core_, r.thing, {m.id, r.stage}, Token::Status::Dormant, make_payload(core_, *kind, {}));
      ++resident_count_;
    }
  }
  auto roots = model_->roots();
  if (model_->navigator && roots.size() == 1 && roots[0]->has_stage(StageKind::Transfer)) {
    core_.navigator = spawn(core_, *model_->navigator, {roots[0]->id, StageKind::Transfer}, Token::Status::Active, {});
    core_.tokens.back().navigator = true;
  }
}

const Token* SimState::token(std::int64_t id) const {
  for (const auto& t : core_.tokens)
    if (t.id == id) return &t;
  return nullptr;
}

Value SimState::attribute_value(const std::string& machine, const std::string& name) const {
  auto it = core_.attributes.find(attribute_key(machine, name));
  if (it == core_.attributes.end()) throw Error(code::kNoPath, "unknown attribute " + machine + "." + name);
  return it->second;
}

std::int64_t SimState::spawn(Core& core, const std::string& kind, const StageRef& at, Token::Status status,
                             std::map<std::string, Value> payload) {
  Token t;
  t.id = core.next_token++;
  t.kind = kind;
  t.payload = std::move(payload);
  t.location = at;
  t.status = status;
  t.created_at = core.clock;
  t.arrived_at = core.clock;
  core.tokens.push_back(std::move(t));
  return core.tokens.back().id;
}

std::string SimState::choose(Core& core, const std::string& label, const std::vector<std::string>& options) {
  const auto& choices = log_.scenario.choices;
  core.used_choices.resize(choices.size(), false);
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (core.used_choices[i] || !same_text_ci(choices[i].label, label)) continue;
    for (const auto& opt : options) {
      if (same_text_ci(opt, choices[i].value)) {
        core.used_choices[i] = true;
        return opt;
      }
    }
    throw Error(code::kScenario, "choice '" + choices[i].value + "' is not an option at '" + label + "'");
  }
  if (log_.scenario.mode == ChoiceMode::Explore && !options.empty())
    return options[static_cast<std::size_t>(core.rng() % options.size())];
  throw ChoiceNeeded(label, options);
}

std::map<std::string, Value> SimState::make_payload(Core& core, const ThingKind& kind,
                                                   const std::vector<std::pair<std::string, Value>>& given) {
  std::map<std::string, Value> payload;
  for (const auto& [name, v] : given) {
    const PayloadField* f = kind.field(name);
    if (!f) throw Error(code::kNoPath, "thing '" + kind.id + "' has no payload field '" + name + "'");
    auto fitted = fit_value(f->domain, v);
    if (!fitted) throw Error(code::kDomain, value_to_string(v) + " is outside the domain of " + kind.id + "." + name);
    payload[name] = *fitted;
  }
  for (const auto& f : kind.fields) {
    if (payload.count(f.name)) continue;
    auto values = f.domain.enumerate();
    if (values.size() == 1) {
      payload[f.name] = values.front();
      continue;
    }
    const std::string label = kind.id + "." + f.name;
    const bool has_scenario_choice = std::any_of(
        log_.scenario.choices.begin(), log_.scenario.choices.end(), [&](const Choice& c) {
          std::size_t i = static_cast<std::size_t>(&c - log_.scenario.choices.data());
          return same_text_ci(c.label, label) && !(i < core.used_choices.size() && core.used_choices[i]);
        });
    if (f.fallback && !has_scenario_choice) {
      payload[f.name] = *f.fallback;
      continue;
    }
    std::vector<std::string> options;
    for (const auto& v : values) options.push_back(value_to_string(v));
    std::string picked = choose(core, label, options);
    payload[f.name] = *f.domain.coerce(picked);
  }
  return payload;
}

bool SimState::guard_passes(const Core& core, const Edge& e, const Token& t) const {
  if (!e.guard) return true;
  const Guard& g = *e.guard;
  std::optional<Value> actual;
  if (g.is_attribute()) {
    ElementRef ref = resolve_path(*model_, g.subject);
    if (ref.kind != ElementRef::Kind::Attribute) throw Error(code::kNoPath, "guard subject is not an attribute");
    actual = core.attributes.at(attribute_key(ref.machine, ref.name));
  } else if (g.subject == kThingSubject) {
    actual = Value{t.kind};
  } else if (auto it = t.payload.find(g.subject); it != t.payload.end()) {
    actual = it->second;
  }
  if (!actual) return false;
  if (actual->index() != g.literal.index())
    throw Error(code::kGuardType, "guard on edge '" + e.id + "' compares " + g.subject + " with a literal of another type");
  const bool equal = *actual == g.literal;
  return g.op == Guard::Op::Eq ? equal : !equal;
}

std::vector<const Edge*> SimState::enabled_flows(const Core& core, const Token& t) const {
  std::vector<const Edge*> out;
  for (const auto& e : model_->edges) {
    if (e.kind != EdgeKind::Flow || e.source != t.location) continue;
    if (e.carries && *e.carries != t.kind) continue;
    if (guard_passes(core, e, t)) out.push_back(&e);
  }
  return out;
}

std::size_t SimState::choose_edge(Core& core, const std::string& label, const std::vector<const Edge*>& edges) {
  if (edges.size() == 1) return 0;
  std::vector<std::string> options;
  for (const Edge* e : edges) options.push_back(display_path(*model_, e->target));
  std::string picked = choose(core, label, options);
  return static_cast<std::size_t>(std::find(options.begin(), options.end(), picked) - options.begin());
}

void SimState::fire_triggers(Core& core, const Token& executing, StepRecord& rec) {
  const StageRef here = executing.location;
  for (const auto& e : model_->edges) {
    if (e.kind != EdgeKind::Trigger || e.source != here) continue;
    if (!guard_passes(core, e, executing)) continue;
    if (e.target.kind == StageKind::Create) {
      const ThingKind* kind = model_->thing(*e.carries);
      auto payload = make_payload(core, *kind, {});
      std::int64_t id = spawn(core, kind->id, e.target, Token::Status::Active, payload);
      rec.created.push_back({id, kind->id, e.target, {payload.begin(), payload.end()}});
    } else {
      Token* oldest = nullptr;
      for (auto& t : core.tokens) {
        if (t.status != Token::Status::Dormant || t.location.machine != e.target.machine) continue;
        if (e.carries && t.kind != *e.carries) continue;
        if (!oldest || std::tie(t.created_at, t.id) < std::tie(oldest->created_at, oldest->id)) oldest = &t;
      }
      if (!oldest)
        throw Error(code::kNoResident, "trigger '" + e.id + "' found no waiting " + e.carries.value_or("thing") +
                                           " in " + e.target.machine);
      oldest->location = e.target;
      oldest->status = Token::Status::Active;
      oldest->arrived_at = core.clock;
      rec.woken.push_back(oldest->id);
    }
    rec.fired_triggers.push_back(e.id);
  }
}

StepRecord SimState::traverse(Core& core, std::size_t token_index, const Edge& edge, StepRecord::Kind kind) {
  ++core.clock;
  Token& t = core.tokens[token_index];
  StepRecord rec;
  rec.kind = kind;
  rec.time = core.clock;
  rec.token = t.id;
  rec.element = edge.id;
  rec.from = t.location;
  rec.to = edge.target;
  t.location = edge.target;
  t.arrived_at = core.clock;
  if (edge.target.kind == StageKind::Process || edge.target.kind == StageKind::Create) {
    Token executing = t;  // fire_triggers may grow core.tokens
    fire_triggers(core, executing, rec);
  }
  return rec;
}

std::optional<StepRecord> SimState::step_in(Core& core) {
  // Settle tokens that can no longer move.
  for (auto& t : core.tokens) {
    if (t.status == Token::Status::Active && !t.navigator && enabled_flows(core, t).empty())
      t.status = Token::Status::Settled;
  }
  std::optional<std::size_t> best;
  std::size_t best_edge = 0;
  for (std::size_t i = 0; i < core.tokens.size(); ++i) {
    const Token& t = core.tokens[i];
    if (t.status != Token::Status::Active || t.navigator) continue;
    auto flows = enabled_flows(core, t);
    std::size_t first = static_cast<std::size_t>(flows.front() - model_->edges.data());
    if (!best) {
      best = i;
      best_edge = first;
      continue;
    }
    const Token& b = core.tokens[*best];
    if (std::tie(t.arrived_at, first, t.id) < std::tie(b.arrived_at, best_edge, b.id)) {
      best = i;
      best_edge = first;
    }
  }
  if (!best) return std::nullopt;
  const Token& t = core.tokens[*best];
  auto flows = enabled_flows(core, t);
  std::size_t pick = choose_edge(core, display_path(*model_, t.location), flows);
  return traverse(core, *best, *flows[pick], StepRecord::Kind::Flow);
}

StepRecord SimState::action_in(Core& core, const Action& action) {
  switch (action.type) {
    case Action::Type::SetAttribute: {
      ElementRef ref = resolve_path(*model_, action.path);
      if (ref.kind != ElementRef::Kind::Attribute)
        throw Error(code::kNoPath, "'" + action.path + "' is not an attribute");
      const Attribute* a = model_->machine(ref.machine)->attribute(ref.name);
      if (!action.value) throw Error(code::kDomain, "set_attribute needs a value");
      auto fitted = fit_value(a->domain, *action.value);
      if (!fitted)
        throw Error(code::kDomain, value_to_string(*action.value) + " is outside the domain of " + action.path);
      ++core.clock;
      core.attributes[attribute_key(ref.machine, ref.name)] = *fitted;
      StepRecord rec;
      rec.kind = StepRecord::Kind::Set;
      rec.time = core.clock;
      rec.element = ref.id();
      rec.value = *fitted;
      return rec;
    }
    case Action::Type::Inject: {
      ElementRef ref = resolve_path(*model_, action.path);
      if (ref.kind != ElementRef::Kind::Stage) throw Error(code::kNoPath, "'" + action.path + "' is not a stage");
      const ThingKind* kind = model_->thing(action.thing);
      if (!kind) throw Error(code::kNoPath, "unknown thing '" + action.thing + "'");
      auto payload = make_payload(core, *kind, action.payload);
      ++core.clock;
      std::int64_t id = spawn(core, kind->id, ref.stage_ref(), Token::Status::Active, payload);
      StepRecord rec;
      rec.kind = StepRecord::Kind::Inject;
      rec.time = core.clock;
      rec.token = id;
      rec.element = ref.id();
      rec.to = ref.stage_ref();
      rec.created.push_back({id, kind->id, ref.stage_ref(), {payload.begin(), payload.end()}});
      return rec;
    }
    case Action::Type::ClickStage: {
      ElementRef ref = resolve_path(*model_, action.path);
      if (ref.kind != ElementRef::Kind::Stage) throw Error(code::kNoPath, "'" + action.path + "' is not a stage");
      if (!core.navigator) throw Error(code::kNotEnabled, "model has no navigation token");
      auto visible = visible_stages();
      bool shown = std::any_of(visible.begin(), visible.end(),
                               [&](const VisibleStage& v) { return v.stage == ref.stage_ref(); });
      if (!shown) throw Error(code::kNotEnabled, action.path + " is not visible from the current view");
      auto candidates = click_candidates(core, ref.stage_ref());
      if (candidates.empty()) throw Error(code::kNotEnabled, action.path + " cannot be entered from here");
      std::size_t pick = choose_edge(core, display_path(*model_, ref.stage_ref()), candidates);
      std::size_t index = 0;
      for (; index < core.tokens.size(); ++index)
        if (core.tokens[index].id == *core.navigator) break;
      return traverse(core, index, *candidates[pick], StepRecord::Kind::Click);
    }
  }
  throw Error(code::kScenario, "unknown action");
}

// Clicking stage S follows an enabled flow from the navigation token into S,
// or, when the token already sits at S, an enabled flow leaving its machine.
std::vector<const Edge*> SimState::click_candidates(const Core& core, const StageRef& clicked) const {
  std::vector<const Edge*> out;
  if (!core.navigator) return out;
  const Token* nav = nullptr;
  for (const auto& t : core.tokens)
    if (t.id == *core.navigator) nav = &t;
  for (const Edge* e : enabled_flows(core, *nav)) {
    if (e->target == clicked) out.push_back(e);
    else if (nav->location == clicked && e->target.machine != nav->location.machine) out.push_back(e);
  }
  return out;
}

std::vector<const Machine*> SimState::visible_submachines() const {
  std::vector<const Machine*> out;
  const Token* nav = core_.navigator ? token(*core_.navigator) : nullptr;
  if (!nav) return out;
  for (const Machine* child : model_->children(nav->location.machine))
    if (!child->placement || *child->placement == nav->location.kind) out.push_back(child);
  return out;
}

std::vector<VisibleStage> SimState::visible_stages() const {
  std::vector<VisibleStage> out;
  const Token* nav = core_.navigator ? token(*core_.navigator) : nullptr;
  if (!nav) return out;
  auto add_machine = [&](const Machine& m) {
    for (StageKind k : m.stages) {
      StageRef s{m.id, k};
      out.push_back({s, !click_candidates(core_, s).empty()});
    }
  };
  add_machine(*model_->machine(nav->location.machine));
  for (const Machine* child : visible_submachines()) add_machine(*child);
  return out;
}

StepRecord SimState::commit(Core& core, StepRecord rec) {
  core_ = std::move(core);
  rec.index = log_.steps.size();
  log_.steps.push_back(rec);
  return rec;
}

std::optional<StepRecord> SimState::step() {
  Core work = core_;
  if (auto rec = step_in(work)) return commit(work, std::move(*rec));
  // No token can move: keep settlements, then run the next scenario action.
  if (work.next_action < log_.scenario.actions.size()) {
    const Action action = log_.scenario.actions[work.next_action];
    ++work.next_action;
    return commit(work, action_in(work, action));
  }
  core_ = std::move(work);
  return std::nullopt;
}

StepRecord SimState::apply_action(const Action& action) {
  Core work = core_;
  return commit(work, action_in(work, action));
}

void SimState::provide_choice(Choice choice) {
  log_.scenario.choices.push_back(std::move(choice));
  core_.used_choices.push_back(false);
}

// ---------------------------------------------------------------------------

SimState new_session(std::shared_ptr<const Model> model, Scenario scenario) {
  auto diags = validate(*model);
  if (has_errors(diags)) {
    std::string first;
    for (const auto& d : diags)
      if (d.severity == Severity::Error) {
        first = format_diagnostic(d);
        break;
      }
    throw Error(code::kInvalidModel, "model has validation errors: " + first);
  }
  return SimState(std::move(model), std::move(scenario));
}

SimState new_session(const Model& model, Scenario scenario) {
  return new_session(std::make_shared<const Model>(model), std::move(scenario));
}

std::optional<StepRecord> step(SimState& state) { return state.step(); }

const StepLog& run(SimState& state, std::size_t max_steps) {
  for (std::size_t n = 0; n < max_steps; ++n) {
    std::optional<StepRecord> rec;
    try {
      rec = state.step();
    } catch (const ChoiceNeeded&) {
      throw;
    } catch (const Error& e) {
      throw Error(e.code(), "step " + std::to_string(state.log().steps.size()) + ": " + e.what());
    }
    if (!rec) break;
  }
  return state.log();
}

StepRecord apply_action(SimState& state, const Action& action) { return state.apply_action(action); }

std::vector<Anomaly> detect_transfer_without_receive(const StepLog& log, std::int64_t window) {
  if (window < 1) throw Error(code::kDomain, "anomaly window must be at least 1");
  std::vector<Anomaly> out;
  const auto& steps = log.steps;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepRecord& s = steps[i];
    if (!s.token || !s.from || !s.to) continue;
    if (s.from->kind != StageKind::Transfer || s.to->kind != StageKind::Transfer) continue;
    if (s.from->machine == s.to->machine) continue;
    const StageRef expected{s.to->machine, StageKind::Receive};
    const std::int64_t deadline = s.time + window;
    bool received = false;
    for (std::size_t j = i + 1; j < steps.size() && steps[j].time <= deadline; ++j) {
      if (steps[j].token == s.token && steps[j].to == expected) {
        received = true;
        break;
      }
    }
    if (!received) out.push_back({"TRANSFER_WITHOUT_RECEIVE", *s.token, *s.from, expected, window, deadline, i});
  }
  return out;
}

}  // namespace tmkit
