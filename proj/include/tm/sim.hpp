#pragma once

// Deterministic token simulation over a validated model.
//
// Scheduling: among active tokens that can move, the oldest arrival goes
// first; ties go to the token whose earliest enabled edge was declared first,
// then to the lower token id. Entering a Process or Create stage fires that
// stage's triggers in declaration order. A token with no enabled outgoing
// flow settles for good. Resident tokens start dormant and wake only when a
// trigger moves them.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tm/model.hpp"

namespace tmkit {

enum class ChoiceMode { Strict, Explore };

struct Choice {
  std::string label;
  std::string value;
  bool operator==(const Choice&) const = default;
};

struct Action {
  enum class Type { SetAttribute, Inject, ClickStage };
  Type type = Type::ClickStage;
  std::string path;   // attribute path, inject stage, or clicked stage
  std::string thing;  // Inject only
  std::optional<Value> value;                           // SetAttribute only
  std::vector<std::pair<std::string, Value>> payload;   // Inject only

  static Action set(std::string path, Value v) { return {Type::SetAttribute, std::move(path), {}, std::move(v), {}}; }
  static Action click(std::string path) { return {Type::ClickStage, std::move(path), {}, std::nullopt, {}}; }
  static Action inject(std::string thing, std::string stage,
                       std::vector<std::pair<std::string, Value>> payload = {}) {
    return {Type::Inject, std::move(stage), std::move(thing), std::nullopt, std::move(payload)};
  }
  bool operator==(const Action&) const = default;
};

struct Scenario {
  std::string name;
  ChoiceMode mode = ChoiceMode::Strict;
  std::uint64_t seed = 0;
  std::vector<Choice> choices;
  std::vector<Action> actions;
  bool operator==(const Scenario&) const = default;
};

/// Parses the `.scenario` text format (docs/scenario.md). Throws Error(E_SCENARIO).
Scenario parse_scenario(std::string_view text, const std::string& file = {});
Scenario load_scenario(const std::string& path);

struct Token {
  enum class Status { Dormant, Active, Settled };
  std::int64_t id = 0;
  std::string kind;
  std::map<std::string, Value> payload;
  StageRef location;
  Status status = Status::Active;
  std::int64_t created_at = 0;
  std::int64_t arrived_at = 0;
  bool navigator = false;

  bool operator==(const Token&) const = default;
};

struct CreatedToken {
  std::int64_t token = 0;
  std::string kind;
  StageRef stage;
  std::vector<std::pair<std::string, Value>> payload;
  bool operator==(const CreatedToken&) const = default;
};

struct StepRecord {
  enum class Kind { Flow, Click, Inject, Set };
  std::size_t index = 0;
  std::int64_t time = 0;
  Kind kind = Kind::Flow;
  std::optional<std::int64_t> token;
  std::string element;  // edge id, attribute id, or injected stage id
  std::optional<StageRef> from;
  std::optional<StageRef> to;
  std::vector<std::string> fired_triggers;
  std::vector<CreatedToken> created;
  std::vector<std::int64_t> woken;  // dormant tokens moved by triggers
  std::optional<Value> value;       // Set only

  bool operator==(const StepRecord&) const = default;
};

struct StepLog {
  std::string model_hash;
  Scenario scenario;
  std::vector<StepRecord> steps;
  bool operator==(const StepLog&) const = default;
};

struct Anomaly {
  std::string rule = "TRANSFER_WITHOUT_RECEIVE";
  std::int64_t token = 0;
  StageRef from;
  StageRef expected;
  std::int64_t window = 0;
  std::int64_t detected_at = 0;
  std::size_t step = 0;  // index of the transfer step
  bool operator==(const Anomaly&) const = default;
};

/// Raised when a branch or payload value needs a choice the scenario lacks.
class ChoiceNeeded : public Error {
 public:
  ChoiceNeeded(std::string label, std::vector<std::string> options)
      : Error(code::kChoiceNeeded, "choice needed at '" + label + "'"),
        label_(std::move(label)),
        options_(std::move(options)) {}
  const std::string& label() const noexcept { return label_; }
  const std::vector<std::string>& options() const noexcept { return options_; }

 private:
  std::string label_;
  std::vector<std::string> options_;
};

struct VisibleStage {
  StageRef stage;
  bool enabled = false;
};

class SimState {
 public:
  SimState(std::shared_ptr<const Model> model, Scenario scenario);

  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }
  const StepLog& log() const { return log_; }
  const std::vector<Token>& tokens() const { return core_.tokens; }
  const std::map<std::string, Value>& attributes() const { return core_.attributes; }
  std::int64_t clock() const { return core_.clock; }
  std::optional<std::int64_t> navigator() const { return core_.navigator; }
  const Token* token(std::int64_t id) const;
  std::size_t pending_actions() const { return log_.scenario.actions.size() - core_.next_action; }
  std::size_t resident_count() const { return resident_count_; }

  /// One scheduler move, or the next scenario action when no token can move.
  /// nullopt means quiescent.
  std::optional<StepRecord> step();
  StepRecord apply_action(const Action& action);
  /// Appends a choice the scheduler will consume by label.
  void provide_choice(Choice choice);

  /// Every stage the navigation token's view offers, with click feasibility.
  std::vector<VisibleStage> visible_stages() const;
  std::vector<const Machine*> visible_submachines() const;

  Value attribute_value(const std::string& machine, const std::string& name) const;

 private:
  struct Core {
    std::vector<Token> tokens;
    std::map<std::string, Value> attributes;  // "Machine.id.attr" -> value
    std::int64_t clock = 0;
    std::int64_t next_token = 1;
    std::size_t next_action = 0;
    std::vector<bool> used_choices;
    std::mt19937_64 rng;
    std::optional<std::int64_t> navigator;
  };

  std::optional<StepRecord> step_in(Core& core);
  StepRecord action_in(Core& core, const Action& action);
  StepRecord traverse(Core& core, std::size_t token_index, const Edge& edge, StepRecord::Kind kind);
  void fire_triggers(Core& core, const Token& executing, StepRecord& rec);
  std::vector<const Edge*> enabled_flows(const Core& core, const Token& t) const;
  std::vector<const Edge*> click_candidates(const Core& core, const StageRef& clicked) const;
  bool guard_passes(const Core& core, const Edge& e, const Token& t) const;
  std::string choose(Core& core, const std::string& label, const std::vector<std::string>& options);
  std::size_t choose_edge(Core& core, const std::string& label, const std::vector<const Edge*>& edges);
  std::map<std::string, Value> make_payload(Core& core, const ThingKind& kind,
                                            const std::vector<std::pair<std::string, Value>>& given);
  std::int64_t spawn(Core& core, const std::string& kind, const StageRef& at, Token::Status status,
                     std::map<std::string, Value> payload);
  StepRecord commit(Core& core, StepRecord rec);

  std::shared_ptr<const Model> model_;
  Core core_;
  StepLog log_;
  std::size_t resident_count_ = 0;
};

std::string model_hash(const Model& model);

/// Throws Error(E_INVALID_MODEL) if the model has validation errors.
SimState new_session(std::shared_ptr<const Model> model, Scenario scenario);
SimState new_session(const Model& model, Scenario scenario);

std::optional<StepRecord> step(SimState& state);
/// Steps until quiescent or `max_steps` records have been added.
const StepLog& run(SimState& state, std::size_t max_steps);
StepRecord apply_action(SimState& state, const Action& action);

std::vector<Anomaly> detect_transfer_without_receive(const StepLog& log, std::int64_t window);

inline constexpr std::int64_t kDefaultAnomalyWindow = 10;

}  // namespace tmkit
