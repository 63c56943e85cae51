#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "tm/render.hpp"
#include "tm/sim.hpp"

using namespace tmkit;

namespace {

const std::vector<std::pair<std::string, std::string>> kCorpusScenarios = {
    {"login_shapes.tm", "circle_center"},      {"login_shapes.tm", "circle_rubber_band"},
    {"login_shapes.tm", "circle_circumference"}, {"login_shapes.tm", "line_select"},
    {"login_shapes.tm", "login_denied"},       {"digital_home.tm", "elder_fall"},
    {"digital_home.tm", "elder_ok"},           {"digital_home.tm", "visit"},
};

template <class F>
std::string error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "no error";
}

const Token* find_kind(const SimState& st, const std::string& kind) {
  for (const auto& t : st.tokens())
    if (t.kind == kind) return &t;
  return nullptr;
}

// Independent guard check against a pre-step snapshot.
bool guard_held(const SimState& before, const Edge& e, const Token& t) {
  if (!e.guard) return true;
  const Guard& g = *e.guard;
  std::optional<Value> actual;
  if (g.subject == "thing") actual = Value{t.kind};
  else if (g.subject.find('.') != std::string::npos) {
    ElementRef r = resolve_path(before.model(), g.subject);
    actual = before.attribute_value(r.machine, r.name);
  } else if (t.payload.count(g.subject)) {
    actual = t.payload.at(g.subject);
  }
  if (!actual) return false;
  return (g.op == Guard::Op::Eq) == (*actual == g.literal);
}

StepRecord cross_transfer(std::size_t index, std::int64_t time, std::int64_t token, const std::string& from,
                          const std::string& to) {
  StepRecord s;
  s.index = index;
  s.time = time;
  s.token = token;
  s.from = StageRef{from, StageKind::Transfer};
  s.to = StageRef{to, StageKind::Transfer};
  return s;
}

StepRecord move(std::size_t index, std::int64_t time, std::int64_t token, StageRef from, StageRef to) {
  StepRecord s;
  s.index = index;
  s.time = time;
  s.token = token;
  s.from = from;
  s.to = to;
  return s;
}

}  // namespace

TEST_CASE("new_session places residents and the navigation token") {
  Model m = tmtest::load("digital_home.tm");
  SimState st = new_session(m, Scenario{});
  CHECK(st.clock() == 0);
  CHECK(st.log().steps.empty());
  const Token* elder = find_kind(st, "elder");
  REQUIRE(elder);
  CHECK(elder->location == StageRef{"House.Bedroom", StageKind::Process});
  CHECK(elder->status == Token::Status::Dormant);
  REQUIRE(st.navigator());
  CHECK(st.token(*st.navigator())->location == StageRef{"House", StageKind::Transfer});
  CHECK(st.resident_count() == 1);
}

TEST_CASE("model without residents starts with no tokens") {
  Model m = tmtest::parse_or_throw("model m\nthing x {}\nmachine A { stages create, release; }\nflow A.create -> A.release carries x;\n");
  SimState st = new_session(m, Scenario{});
  CHECK(st.tokens().empty());
  CHECK_FALSE(step(st).has_value());
}

TEST_CASE("invalid model is refused") {
  Model m = tmtest::parse_or_throw("model m\nmachine A { stages receive, create; }\nflow A.receive -> A.create;\n");
  CHECK(error_code_of([&] { new_session(m, Scenario{}); }) == code::kInvalidModel);
}

TEST_CASE("approval trigger releases the resident menu") {
  Model m = tmtest::load("login_shapes.tm");
  StepLog log = tmtest::run_scenario(m, "circle_center");
  auto it = std::find_if(log.steps.begin(), log.steps.end(), [](const StepRecord& s) {
    return std::find(s.fired_triggers.begin(), s.fired_triggers.end(), "approve") != s.fired_triggers.end();
  });
  REQUIRE(it != log.steps.end());
  CHECK(it->to == StageRef{"Interface.System", StageKind::Process});
  REQUIRE(it->woken.size() == 1);
  // The next step moves the woken menu from the system's release stage.
  auto next = std::find_if(it, log.steps.end(), [&](const StepRecord& s) { return s.token == it->woken[0]; });
  REQUIRE(next != log.steps.end());
  CHECK(next->element == "menu_out");
}

TEST_CASE("a smaller circle is created and released back to the user after a center click") {
  Model m = tmtest::load("login_shapes.tm");
  StepLog log = tmtest::run_scenario(m, "circle_center");
  auto redraw = std::find_if(log.steps.begin(), log.steps.end(), [](const StepRecord& s) {
    return !s.created.empty() && s.created[0].kind == "circle";
  });
  REQUIRE(redraw != log.steps.end());
  const auto created = redraw->created[0];
  CHECK(created.kind == "circle");
  CHECK(created.stage == StageRef{"Interface.System", StageKind::Create});
  CHECK(log.steps.back().token == created.token);
  CHECK(log.steps.back().to == StageRef{"Interface.User", StageKind::Receive});
}

TEST_CASE("a circumference click settles without firing anything") {
  Model m = tmtest::load("login_shapes.tm");
  SimState st = new_session(m, tmtest::scenario("circle_circumference"));
  run(st, 1000);
  const StepRecord& last = st.log().steps.back();
  CHECK(last.element == "circumference_in");
  CHECK(last.fired_triggers.empty());
  const Token* t = st.token(*last.token);
  CHECK(t->status == Token::Status::Settled);
  CHECK(t->location == StageRef{"Interface.System", StageKind::Receive});
}

TEST_CASE("run respects max_steps") {
  Model m = tmtest::load("login_shapes.tm");
  SimState st = new_session(m, tmtest::scenario("circle_center"));
  CHECK(run(st, 0).steps.empty());
  CHECK(run(st, 5).steps.size() == 5);
}

TEST_CASE("strict mode asks for missing choices") {
  Model m = tmtest::load("login_shapes.tm");
  Scenario sc;
  sc.actions.push_back(Action::inject("request", "User.create"));
  SimState st = new_session(m, sc);
  try {
    run(st, 100);
    FAIL("expected a choice");
  } catch (const ChoiceNeeded& c) {
    CHECK(c.code() == code::kChoiceNeeded);
    CHECK(c.label() == "request.approved");
    CHECK(c.options().size() == 2);
  }
  CHECK(st.log().steps.empty());
  st.provide_choice({"request.approved", "false"});
  run(st, 100);
  CHECK(find_kind(st, "request")->payload.at("approved") == Value{false});
}

TEST_CASE("branch choices are labeled by stage and offer target paths") {
  Model m = tmtest::load("digital_home.tm");
  Scenario sc = tmtest::scenario("elder_fall");
  sc.choices.erase(sc.choices.begin() + 1, sc.choices.end());
  SimState st = new_session(m, sc);
  try {
    run(st, 100);
    FAIL("expected a choice");
  } catch (const ChoiceNeeded& c) {
    CHECK(c.label() == "Hall.Transfer");
    CHECK(c.options() == std::vector<std::string>{"Hall.Receive", "Bathroom.Transfer"});
  }
}

TEST_CASE("explore mode is reproducible for a seed") {
  Model m = tmtest::load("login_shapes.tm");
  Scenario sc;
  sc.mode = ChoiceMode::Explore;
  sc.seed = 42;
  sc.actions.push_back(Action::inject("request", "User.create"));
  sc.actions.push_back(Action::inject("action", "User.create"));
  SimState a = new_session(m, sc);
  SimState b = new_session(m, sc);
  CHECK(dump_json(steplog_to_json(run(a, 1000))) == dump_json(steplog_to_json(run(b, 1000))));
}

TEST_CASE("trigger without a waiting resident fails") {
  Model m = tmtest::parse_or_throw(R"(model m
thing x {}
thing y {}
machine A { stages create, process, release; }
flow A.create -> A.process carries x;
trigger A.process ~> A.release carries y;
)");
  Scenario sc;
  sc.actions.push_back(Action::inject("x", "A.create"));
  SimState st = new_session(m, sc);
  CHECK(error_code_of([&] { run(st, 10); }) == code::kNoResident);
  CHECK(st.log().steps.size() == 1);
}

TEST_CASE("digital home navigation") {
  Model m = tmtest::load("digital_home.tm");
  SimState st = new_session(m, Scenario{});
  auto nav = [&] { return st.token(*st.navigator())->location; };

  auto rec = apply_action(st, Action::click("House.Transfer"));
  CHECK(rec.kind == StepRecord::Kind::Click);
  CHECK(nav() == StageRef{"House.Entrance", StageKind::Transfer});
  std::vector<std::string> subs;
  for (const Machine* s : st.visible_submachines()) subs.push_back(s->name);
  CHECK(subs == std::vector<std::string>{"Door", "Light"});

  SUBCASE("closed door blocks the receive click and leaves state unchanged") {
    const auto steps = st.log().steps;
    const auto tokens = st.tokens();
    const auto clock = st.clock();
    CHECK(error_code_of([&] { apply_action(st, Action::click("Entrance.Receive")); }) == code::kNotEnabled);
    CHECK(st.log().steps == steps);
    CHECK(st.tokens() == tokens);
    CHECK(st.clock() == clock);
  }
  SUBCASE("opening the door lets the visitor in") {
    apply_action(st, Action::set("Door.state", Value{std::string("open")}));
    CHECK(st.attribute_value("House.Entrance.Door", "state") == Value{std::string("open")});
    apply_action(st, Action::click("Entrance.Receive"));
    CHECK(nav() == StageRef{"House.Entrance", StageKind::Receive});
    subs.clear();
    for (const Machine* s : st.visible_submachines()) subs.push_back(s->name);
    CHECK(subs == std::vector<std::string>{"Light", "Camera"});
    apply_action(st, Action::click("Entrance.Process"));
    CHECK(nav() == StageRef{"House.Entrance", StageKind::Process});
  }
  SUBCASE("device attributes") {
    apply_action(st, Action::set("Entrance.Light.state", Value{std::string("on")}));
    CHECK(st.attribute_value("House.Entrance.Light", "state") == Value{std::string("on")});
    CHECK(error_code_of([&] { apply_action(st, Action::set("Door.state", Value{std::string("ajar")})); }) ==
          code::kDomain);
    CHECK(error_code_of([&] { apply_action(st, Action::set("Door.colour", Value{true})); }) == code::kNoPath);
  }
  SUBCASE("stages outside the view cannot be clicked") {
    CHECK(error_code_of([&] { apply_action(st, Action::click("Bathroom.Transfer")); }) == code::kNotEnabled);
  }
  SUBCASE("visible stage flags agree with click outcomes") {
    apply_action(st, Action::set("Door.state", Value{std::string("open")}));
    for (const auto& vs : st.visible_stages()) {
      SimState probe = st;
      bool ok = true;
      try {
        apply_action(probe, Action::click(vs.stage.id()));
      } catch (const Error&) {
        ok = false;
      }
      INFO(vs.stage.id());
      CHECK(ok == vs.enabled);
    }
  }
}

TEST_CASE("elder scenarios") {
  Model m = tmtest::load("digital_home.tm");
  StepLog fall = tmtest::run_scenario(m, "elder_fall");
  auto anomalies = detect_transfer_without_receive(fall, kDefaultAnomalyWindow);
  REQUIRE(anomalies.size() == 1);
  CHECK(anomalies[0].expected == StageRef{"House.Bathroom", StageKind::Receive});
  CHECK(anomalies[0].from == StageRef{"House.Hall", StageKind::Transfer});
  CHECK(detect_transfer_without_receive(tmtest::run_scenario(m, "elder_ok"), kDefaultAnomalyWindow).empty());
}

TEST_CASE("anomaly window arithmetic") {
  const StageRef bath_receive{"H.Bath", StageKind::Receive};
  StepLog log;
  log.steps.push_back(cross_transfer(0, 1, 7, "H.Hall", "H.Bath"));
  log.steps.push_back(move(1, 2, 8, {"H.Hall", StageKind::Receive}, {"H.Hall", StageKind::Release}));
  log.steps.push_back(move(2, 3, 7, {"H.Bath", StageKind::Transfer}, bath_receive));
  auto w1 = detect_transfer_without_receive(log, 1);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0].detected_at == 2);
  CHECK(w1[0].expected == bath_receive);
  CHECK(detect_transfer_without_receive(log, 2).empty());
  CHECK(detect_transfer_without_receive(log, 3).empty());
  CHECK(error_code_of([&] { detect_transfer_without_receive(log, 0); }) == code::kDomain);

  SUBCASE("a receive by another token does not count") {
    log.steps[2].token = 8;
    CHECK(detect_transfer_without_receive(log, 3).size() == 1);
  }
  SUBCASE("within-machine transfers are ignored") {
    StepLog inside;
    inside.steps.push_back(move(0, 1, 1, {"A", StageKind::Release}, {"A", StageKind::Transfer}));
    CHECK(detect_transfer_without_receive(inside, 1).empty());
  }
}

TEST_CASE("anomaly detection matches the quadratic oracle on random logs") {
  std::mt19937_64 rng(8);
  const std::vector<std::string> machines = {"M.A", "M.B", "M.C"};
  for (int n = 0; n < 500; ++n) {
    StepLog log;
    int len = static_cast<int>(rng() % 12);
    std::int64_t time = 0;
    for (int i = 0; i < len; ++i) {
      time += 1;
      StageRef from{machines[rng() % 3], kAllStages[rng() % 5]};
      StageRef to{rng() % 2 ? from.machine : machines[rng() % 3], rng() % 2 ? StageKind::Transfer : StageKind::Receive};
      if (rng() % 3 == 0) from.kind = StageKind::Transfer;
      log.steps.push_back(move(static_cast<std::size_t>(i), time, 1 + static_cast<std::int64_t>(rng() % 3), from, to));
    }
    std::int64_t window = 1 + static_cast<std::int64_t>(rng() % 5);
    CHECK(detect_transfer_without_receive(log, window) == tmtest::naive_anomalies(log, window));
  }
}

TEST_CASE("step invariants over every corpus scenario") {
  for (const auto& [file, name] : kCorpusScenarios) {
    INFO(file << " / " << name);
    Model m = tmtest::load(file);
    SimState st = new_session(m, tmtest::scenario(name));
    std::size_t created = 0;
    for (int guard = 0; guard < 1000; ++guard) {
      SimState before = st;
      auto rec = step(st);
      if (!rec) break;
      // Gapless indices and a clock advancing by exactly one.
      CHECK(rec->index == before.log().steps.size());
      CHECK(rec->time == before.clock() + 1);
      CHECK(st.clock() == rec->time);
      created += rec->created.size();
      // Traversed edges exist, connect the recorded stages, and were enabled.
      if (rec->kind == StepRecord::Kind::Flow || rec->kind == StepRecord::Kind::Click) {
        const Edge* e = m.edge(rec->element);
        REQUIRE(e);
        CHECK(e->kind == EdgeKind::Flow);
        CHECK(e->source == *rec->from);
        CHECK(e->target == *rec->to);
        const Token* t = before.token(*rec->token);
        REQUIRE(t);
        CHECK(guard_held(before, *e, *t));
        CHECK((!e->carries || *e->carries == t->kind));
      }
      // Conservation: nothing appears or vanishes outside the log.
      std::size_t nav = st.navigator() ? 1 : 0;
      CHECK(st.tokens().size() == st.resident_count() + created + nav);
      for (const auto& t : st.tokens()) CHECK(m.machine(t.location.machine)->has_stage(t.location.kind));
    }
  }
}

TEST_CASE("determinism: repeated runs serialize identically") {
  for (const auto& [file, name] : kCorpusScenarios) {
    Model m = tmtest::load(file);
    std::string first = dump_json(steplog_to_json(tmtest::run_scenario(m, name)));
    for (int i = 0; i < 3; ++i) CHECK(dump_json(steplog_to_json(tmtest::run_scenario(m, name))) == first);
  }
}

TEST_CASE("model hash follows canonical text") {
  Model a = tmtest::load("login_shapes.tm");
  Model b = tmtest::parse_or_throw(serialize(a));
  CHECK(model_hash(a) == model_hash(b));
  CHECK(model_hash(a).size() == 64);
  CHECK(model_hash(a) != model_hash(tmtest::load("digital_home.tm")));
}

TEST_CASE("scenario text format") {
  Scenario sc = parse_scenario(R"(scenario demo   # trailing comment
mode explore
seed 9
choose request.approved = true
set Door.state = "open"
set Bed.occupied = false
inject action at User.create { kind = center, n = 3 }
click House.Transfer
)");
  CHECK(sc.name == "demo");
  CHECK(sc.mode == ChoiceMode::Explore);
  CHECK(sc.seed == 9);
  CHECK(sc.choices == std::vector<Choice>{{"request.approved", "true"}});
  REQUIRE(sc.actions.size() == 4);
  CHECK(sc.actions[0] == Action::set("Door.state", Value{std::string("open")}));
  CHECK(sc.actions[1] == Action::set("Bed.occupied", Value{false}));
  CHECK(sc.actions[2] == Action::inject("action", "User.create",
                                        {{"kind", Value{std::string("center")}}, {"n", Value{std::int64_t{3}}}}));
  CHECK(sc.actions[3] == Action::click("House.Transfer"));

  for (const char* bad : {"mode lazy", "seed x", "set A.b", "inject a", "inject a at S { k }", "jump A",
                          "set A.b = \"open"}) {
    INFO(bad);
    CHECK(error_code_of([&] { parse_scenario(bad); }) == code::kScenario);
  }
  CHECK(error_code_of([] { load_scenario("/nonexistent.scenario"); }) == code::kScenario);
}
