#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "support.hpp"
#include "tm/service.hpp"

using namespace tmkit;

namespace {

std::shared_ptr<const Model> shared(const char* name) { return std::make_shared<const Model>(tmtest::load(name)); }

SessionService home_service(std::size_t cap = 64) {
  ServiceOptions opt;
  opt.session_cap = cap;
  opt.scenario_dir = tmtest::models_dir() + "/scenarios";
  return SessionService(shared("digital_home.tm"), opt);
}

std::string new_id(SessionService& svc, const Json& body = Json::object()) {
  Response r = svc.create_session(body);
  REQUIRE(r.status == 201);
  return r.body["session_id"].get<std::string>();
}

std::vector<std::string> names(const Json& view) {
  std::vector<std::string> out;
  for (const auto& s : view["submachines"]) out.push_back(s["name"].get<std::string>());
  return out;
}

Json attr(const Json& view, const std::string& machine, const std::string& name) {
  for (const auto& s : view["submachines"])
    if (s["name"] == machine)
      for (const auto& a : s["attributes"])
        if (a["name"] == name) return a["value"];
  return nullptr;
}

Json click(const std::string& path) { return Json{{"type", "click_stage"}, {"path", path}}; }

}  // namespace

TEST_CASE("digital home walk-through") {
  SessionService svc = home_service();
  std::string id = new_id(svc);
  Json v = svc.get_view(id).body;
  CHECK(v["focus_path"] == "House");
  CHECK(v["focus_stage"] == "Transfer");

  Response r = svc.post_action(id, click("House.Transfer"));
  REQUIRE(r.status == 200);
  CHECK(r.body["focus_path"] == "Entrance");
  CHECK(names(r.body) == std::vector<std::string>{"Door", "Light"});
  CHECK(attr(r.body, "Door", "state") == "closed");
  CHECK(attr(r.body, "Light", "state") == "off");

  SUBCASE("a closed door answers 409 and changes nothing") {
    const Json before = svc.get_log(id).body;
    Response no = svc.post_action(id, click("Entrance.Receive"));
    CHECK(no.status == 409);
    CHECK(no.body["code"] == "E_NOT_ENABLED");
    CHECK(svc.get_log(id).body == before);
    CHECK(svc.get_view(id).body == r.body);
  }
  SUBCASE("open the door, receive, then process") {
    REQUIRE(svc.post_action(id, Json{{"type", "set_attribute"}, {"path", "Door.state"}, {"value", "open"}}).status == 200);
    Response in = svc.post_action(id, Json{{"click_stage", "Entrance.Receive"}});
    REQUIRE(in.status == 200);
    CHECK(in.body["focus_stage"] == "Receive");
    CHECK(names(in.body) == std::vector<std::string>{"Light", "Camera"});
    Response proc = svc.post_action(id, click("Entrance.Process"));
    REQUIRE(proc.status == 200);
    CHECK(proc.body["available_processes"] ==
          Json::array({"cleaning", "disinfection", "coloring", "control_person", "control_robot"}));
  }
  SUBCASE("bad values and paths") {
    CHECK(svc.post_action(id, Json{{"type", "set_attribute"}, {"path", "Door.state"}, {"value", "ajar"}}).body["code"] ==
          "E_DOMAIN");
    CHECK(svc.post_action(id, Json{{"type", "set_attribute"}, {"path", "Door.state"}, {"value", 1.5}}).status == 422);
    CHECK(svc.post_action(id, click("Nowhere.Transfer")).body["code"] == "E_NOPATH");
    CHECK(svc.post_action(id, Json{{"type", "teleport"}}).status == 422);
    CHECK(svc.post_action(id, Json::array()).status == 422);
  }
}

TEST_CASE("unknown sessions, cap and windows") {
  SessionService svc = home_service(2);
  CHECK(svc.get_view("s99").status == 404);
  CHECK(svc.get_view("s99").body["code"] == "E_NO_SESSION");
  CHECK(svc.post_action("s99", click("House.Transfer")).status == 404);
  CHECK(svc.get_trace("s99").status == 404);
  CHECK(svc.get_anomalies("s99", std::nullopt).status == 404);
  CHECK(svc.get_log("s99").status == 404);

  std::string a = new_id(svc);
  new_id(svc);
  Response full = svc.create_session(Json::object());
  CHECK(full.status == 503);
  CHECK(full.body["code"] == "E_SESSION_CAP");
  CHECK(svc.session_count() == 2);

  CHECK(svc.get_anomalies(a, std::string("0")).status == 422);
  CHECK(svc.get_anomalies(a, std::string("0")).body["code"] == "E_DOMAIN");
  CHECK(svc.get_anomalies(a, std::string("ten")).status == 422);
  CHECK(svc.get_anomalies(a, std::string("3")).status == 200);
}

TEST_CASE("scenario sessions") {
  SessionService svc = home_service();
  std::string id = new_id(svc, Json{{"scenario", "elder_fall"}});
  Json trace = svc.get_trace(id).body;
  REQUIRE(trace.size() == 5);
  CHECK(trace[4]["event"] == "BathroomTransfer");
  Json an = svc.get_anomalies(id, std::nullopt).body;
  REQUIRE(an.size() == 1);
  CHECK(an[0]["expected"] == "Bathroom.Receive");
  CHECK(svc.get_anomalies(new_id(svc, Json{{"scenario", "elder_ok"}}), std::nullopt).body.empty());

  CHECK(svc.create_session(Json{{"scenario", "missing"}}).body["code"] == "E_SCENARIO");
  CHECK(svc.create_session(Json{{"scenario", "../x"}}).status == 422);
}

TEST_CASE("sessions are isolated") {
  SessionService svc = home_service();
  std::string a = new_id(svc);
  std::string b = new_id(svc);
  CHECK(a != b);
  svc.post_action(a, click("House.Transfer"));
  svc.post_action(a, Json{{"type", "set_attribute"}, {"path", "Door.state"}, {"value", "open"}});
  CHECK(svc.get_view(b).body["focus_path"] == "House");
  CHECK(svc.get_log(b).body["steps"].empty());
  svc.post_action(b, click("House.Transfer"));
  CHECK(attr(svc.get_view(b).body, "Door", "state") == "closed");
  CHECK(attr(svc.get_view(a).body, "Door", "state") == "open");
}

TEST_CASE("choices are asked for and answered") {
  SessionService svc(shared("login_shapes.tm"));
  std::string id = new_id(svc);
  Json inject{{"type", "inject"}, {"thing", "request"}, {"at", "User.create"}};
  Response r = svc.post_action(id, inject);
  REQUIRE(r.status == 200);
  REQUIRE(r.body["pending_choice"].is_object());
  CHECK(r.body["pending_choice"]["label"] == "request.approved");
  CHECK(r.body["steps"] == 0);

  CHECK(svc.post_action(id, Json{{"choose", "true"}}).status == 200);
  r = svc.post_action(id, inject);
  REQUIRE(r.status == 200);
  CHECK(r.body["steps"].get<int>() > 0);
  // The menu reaches the user, whose pick needs a second answer.
  CHECK(r.body["pending_choice"]["label"] == "selection.choice");
  r = svc.post_action(id, Json{{"type", "choose"}, {"value", "circle"}});
  REQUIRE(r.status == 200);
  CHECK(r.body["pending_choice"].is_null());
  Json trace = svc.get_trace(id).body;
  std::vector<std::string> events;
  for (const auto& o : trace) events.push_back(o["event"]);
  CHECK(events == std::vector<std::string>{"E1", "E2", "E3", "E4"});

  CHECK(svc.post_action(id, Json{{"choose", "x"}}).status == 422);  // nothing pending
}

TEST_CASE("service refuses invalid models") {
  Model m = tmtest::parse_or_throw("model m\nmachine A { stages receive, create; }\nflow A.receive -> A.create;\n");
  try {
    SessionService svc(std::make_shared<const Model>(m));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == code::kInvalidModel);
  }
}

TEST_CASE("action_from_json shapes") {
  CHECK(*action_from_json(Json{{"click_stage", "A.transfer"}}) == Action::click("A.transfer"));
  CHECK(*action_from_json(Json{{"type", "set_attribute"}, {"path", "D.s"}, {"value", true}}) ==
        Action::set("D.s", Value{true}));
  CHECK(*action_from_json(Json{{"type", "inject"}, {"thing", "x"}, {"at", "A.create"}, {"payload", {{"n", 2}}}}) ==
        Action::inject("x", "A.create", {{"n", Value{std::int64_t{2}}}}));
  CHECK_FALSE(action_from_json(Json{{"choose", "true"}}).has_value());
  CHECK_THROWS_AS(action_from_json(Json{{"type", "inject"}, {"thing", "x"}}), Error);
}

TEST_CASE("HTTP round trip on an ephemeral port") {
  ServiceOptions opt;
  opt.scenario_dir = tmtest::models_dir() + "/scenarios";
  SessionService svc(shared("digital_home.tm"), opt);
  httplib::Server server;
  std::vector<std::string> lines;
  std::mutex lines_mu;
  svc.install(server, [&](const std::string& l) {
    std::lock_guard g(lines_mu);
    lines.push_back(l);
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto model = cli.Get("/model");
  REQUIRE(model);
  CHECK(model->status == 200);
  CHECK(model->body == svc.model_json());

  auto created = cli.Post("/sessions", R"({"scenario": "visit"})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  std::string id = Json::parse(created->body)["session_id"];
  auto view = cli.Get("/sessions/" + id + "/view");
  REQUIRE(view);
  CHECK(Json::parse(view->body)["focus_stage"] == "Process");

  auto bad = cli.Post("/sessions/" + id + "/action", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto missing = cli.Get("/sessions/nope/log");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto an = cli.Get("/sessions/" + id + "/anomalies?window=0");
  REQUIRE(an);
  CHECK(an->status == 422);

  server.stop();
  t.join();
  std::lock_guard g(lines_mu);
  CHECK(lines.size() == 6);
  CHECK(lines[0] == "GET /model 200");
}

TEST_CASE("concurrent requests keep sessions consistent") {
  SessionService svc = home_service();
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back(new_id(svc));
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int k = 0; k < 16; ++k)
    threads.emplace_back([&, k] {
      const std::string& id = ids[static_cast<std::size_t>(k % 8)];
      for (int i = 0; i < 50; ++i) {
        Json value = (i + k) % 2 ? "open" : "closed";
        if (svc.post_action(id, Json{{"type", "set_attribute"}, {"path", "Door.state"}, {"value", value}}).status != 200)
          ++failures;
        if (svc.get_view(id).status != 200) ++failures;
      }
    });
  for (auto& t : threads) t.join();
  CHECK(failures == 0);
  for (const auto& id : ids) {
    Json log = svc.get_log(id).body;
    CHECK(log["steps"].size() == 100);
    for (std::size_t i = 0; i < log["steps"].size(); ++i) CHECK(log["steps"][i]["index"] == i);
  }
}
