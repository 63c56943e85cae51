#include "tm/service.hpp"

#include <charconv>
#include <filesystem>

#include <httplib.h>

#include "tm/behavior.hpp"

namespace tmkit {

namespace {

constexpr const char* kNoSession = "E_NO_SESSION";
constexpr const char* kSessionCap = "E_SESSION_CAP";
constexpr const char* kBadRequest = "E_BAD_REQUEST";

Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, Json{{"code", code}, {"message", message}}};
}

Response from_error(const Error& e) {
  const int status = e.code() == code::kNotEnabled ? 409 : 422;
  return error_response(status, e.code(), e.what());
}

Response no_session(const std::string& id) { return error_response(404, kNoSession, "unknown session '" + id + "'"); }

std::string text(const Json& j) {
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

Value value_of(const Json& j) {
  if (j.is_boolean() || j.is_number_integer() || j.is_string()) return value_from_json(j);
  throw Error(code::kDomain, "value must be a string, integer or boolean");
}

std::vector<std::pair<std::string, Value>> payload_of(const Json& j) {
  std::vector<std::pair<std::string, Value>> out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw Error(code::kScenario, "payload must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) out.emplace_back(it.key(), value_of(it.value()));
  return out;
}

Json pending_json(const ChoiceNeeded& c) {
  return Json{{"label", c.label()}, {"options", c.options()}};
}

}  // namespace

std::optional<Action> action_from_json(const Json& body) {
  if (!body.is_object()) throw Error(code::kScenario, "action must be a JSON object");
  std::string type;
  if (body.contains("type")) {
    type = text(body["type"]);
  } else {
    for (const char* k : {"click_stage", "set_attribute", "inject", "choose"})
      if (body.contains(k)) type = k;
  }
  auto field = [&](const char* name) -> std::string {
    if (body.contains(name)) return text(body[name]);
    if (body.contains(type) && body[type].is_string()) return body[type].get<std::string>();
    throw Error(code::kScenario, type + " action needs '" + name + "'");
  };
  if (type == "click_stage") return Action::click(field("path"));
  if (type == "set_attribute") {
    if (!body.contains("value")) throw Error(code::kDomain, "set_attribute needs a value");
    return Action::set(field("path"), value_of(body["value"]));
  }
  if (type == "inject") {
    std::string thing = body.contains("thing") ? text(body["thing"]) : field("thing");
    if (!body.contains("at")) throw Error(code::kScenario, "inject action needs 'at'");
    return Action::inject(thing, text(body["at"]), payload_of(body.value("payload", Json())));
  }
  if (type == "choose") return std::nullopt;
  throw Error(code::kScenario, "unknown action type '" + type + "'");
}

SessionService::SessionService(std::shared_ptr<const Model> model, ServiceOptions options)
    : model_(std::move(model)), options_(std::move(options)), model_json_(to_json(*model_)) {
  auto diags = validate(*model_);
  if (has_errors(diags)) throw Error(code::kInvalidModel, "cannot serve a model with validation errors");
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(map_mu_);
  return sessions_.size();
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::shared_lock lock(map_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void SessionService::settle(Session& s) {
  s.pending.reset();
  try {
    run(s.state, options_.max_auto_steps);
  } catch (const ChoiceNeeded& c) {
    s.pending = c;
  }
}

Response SessionService::get_model() const {
  return {200, Json::parse(model_json_)};
}

Response SessionService::create_session(const Json& body) {
  Scenario sc;
  sc.name = "session";
  try {
    if (body.is_object() && body.contains("scenario") && !body["scenario"].is_null()) {
      const std::string name = text(body["scenario"]);
      if (name.find('/') != std::string::npos || name.find("..") != std::string::npos)
        return error_response(422, code::kScenario, "scenario names may not contain paths");
      auto path = std::filesystem::path(options_.scenario_dir) / (name + ".scenario");
      sc = load_scenario(path.string());
    }
  } catch (const Error& e) {
    return from_error(e);
  }

  const std::string id = "s" + std::to_string(next_id_.fetch_add(1));
  auto session = std::make_shared<Session>(new_session(model_, std::move(sc)));
  {
    std::unique_lock lock(map_mu_);
    if (sessions_.size() >= options_.session_cap)
      return error_response(503, kSessionCap,
                            "session cap of " + std::to_string(options_.session_cap) + " reached");
    sessions_.emplace(id, session);
  }
  std::lock_guard guard(session->mu);
  try {
    settle(*session);
  } catch (const Error& e) {
    return from_error(e);
  }
  Json out;
  out["session_id"] = id;
  out["view"] = view_json(id, *session);
  return {201, std::move(out)};
}

Json SessionService::view_json(const std::string& id, const Session& s) const {
  const SimState& st = s.state;
  Json v;
  v["session_id"] = id;
  const Token* nav = st.navigator() ? st.token(*st.navigator()) : nullptr;
  auto roots = model_->roots();
  const std::string focus = nav ? nav->location.machine : roots.front()->id;
  v["focus"] = focus;
  v["focus_path"] = display_path(*model_, ElementRef{ElementRef::Kind::Machine, focus, StageKind::Create, {}});
  v["focus_stage"] = nav ? Json(stage_name(nav->location.kind)) : Json(nullptr);

  Json stages = Json::array();
  for (const auto& vs : st.visible_stages())
    stages.push_back(Json{{"stage", vs.stage.id()}, {"path", display_path(*model_, vs.stage)}, {"enabled", vs.enabled}});
  v["visible_stages"] = std::move(stages);

  Json subs = Json::array();
  for (const Machine* m : st.visible_submachines()) {
    Json attrs = Json::array();
    for (const auto& a : m->attributes)
      attrs.push_back(Json{{"name", a.name}, {"value", value_to_json(st.attribute_value(m->id, a.name))}});
    subs.push_back(Json{{"id", m->id}, {"name", m->name}, {"attributes", std::move(attrs)}});
  }
  v["submachines"] = std::move(subs);

  Json procs = Json::array();
  if (nav && nav->location.kind == StageKind::Process)
    for (const auto& a : model_->machine(focus)->attributes)
      if (a.is_process) procs.push_back(a.name);
  v["available_processes"] = std::move(procs);
  v["pending_choice"] = s.pending ? pending_json(*s.pending) : Json(nullptr);
  v["clock"] = st.clock();
  v["steps"] = st.log().steps.size();
  return v;
}

Response SessionService::get_view(const std::string& id) {
  auto s = find(id);
  if (!s) return no_session(id);
  std::lock_guard guard(s->mu);
  return {200, view_json(id, *s)};
}

Response SessionService::post_action(const std::string& id, const Json& body) {
  auto s = find(id);
  if (!s) return no_session(id);
  std::lock_guard guard(s->mu);
  try {
    std::optional<Action> action = action_from_json(body);
    if (!action) {
      const Json& value = body.contains("value") ? body["value"] : body.value("choose", Json());
      if (value.is_null()) return error_response(422, code::kScenario, "choose action needs a value");
      std::string label = body.contains("label") ? text(body["label"]) : std::string{};
      if (label.empty()) {
        if (!s->pending) return error_response(422, code::kScenario, "no choice is pending");
        label = s->pending->label();
      }
      s->state.provide_choice({label, text(value)});
      settle(*s);
      return {200, view_json(id, *s)};
    }
    try {
      s->state.apply_action(*action);
    } catch (const ChoiceNeeded& c) {
      // The action did not happen; the client answers and repeats it.
      s->pending = c;
      return {200, view_json(id, *s)};
    }
    settle(*s);
    return {200, view_json(id, *s)};
  } catch (const Error& e) {
    return from_error(e);
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, kBadRequest, e.what());
  }
}

Response SessionService::get_trace(const std::string& id) {
  auto s = find(id);
  if (!s) return no_session(id);
  std::lock_guard guard(s->mu);
  return {200, trace_to_json(extract_events(s->state.log(), *model_))};
}

Response SessionService::get_anomalies(const std::string& id, const std::optional<std::string>& window) {
  auto s = find(id);
  if (!s) return no_session(id);
  std::int64_t w = kDefaultAnomalyWindow;
  if (window) {
    auto [p, ec] = std::from_chars(window->data(), window->data() + window->size(), w);
    if (ec != std::errc{} || p != window->data() + window->size())
      return error_response(422, code::kDomain, "window must be an integer");
  }
  std::lock_guard guard(s->mu);
  try {
    return {200, anomalies_to_json(detect_transfer_without_receive(s->state.log(), w), *model_)};
  } catch (const Error& e) {
    return from_error(e);
  }
}

Response SessionService::get_log(const std::string& id) {
  auto s = find(id);
  if (!s) return no_session(id);
  std::lock_guard guard(s->mu);
  return {200, steplog_to_json(s->state.log())};
}

void SessionService::install(httplib::Server& server, std::function<void(const std::string&)> log) {
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(dump_json(r.body), "application/json");
  };
  auto parse_body = [](const httplib::Request& req, Json& out) {
    if (req.body.empty()) {
      out = Json::object();
      return true;
    }
    out = Json::parse(req.body, nullptr, false);
    return !out.is_discarded();
  };
  auto bad_json = error_response(400, kBadRequest, "request body is not valid JSON");

  server.Get("/model", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(model_json_, "application/json");
  });
  server.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
    Json body;
    if (!parse_body(req, body)) return reply(res, bad_json);
    reply(res, create_session(body));
  });
  server.Get(R"(/sessions/([^/]+)/view)", [=, this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_view(req.matches[1]));
  });
  server.Post(R"(/sessions/([^/]+)/action)", [=, this](const httplib::Request& req, httplib::Response& res) {
    Json body;
    if (!parse_body(req, body)) return reply(res, bad_json);
    reply(res, post_action(req.matches[1], body));
  });
  server.Get(R"(/sessions/([^/]+)/trace)", [=, this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_trace(req.matches[1]));
  });
  server.Get(R"(/sessions/([^/]+)/anomalies)", [=, this](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> w;
    if (req.has_param("window")) w = req.get_param_value("window");
    reply(res, get_anomalies(req.matches[1], w));
  });
  server.Get(R"(/sessions/([^/]+)/log)", [=, this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_log(req.matches[1]));
  });
  if (log)
    server.set_logger([log](const httplib::Request& req, const httplib::Response& res) {
      log(req.method + " " + req.path + " " + std::to_string(res.status));
    });
}

bool serve(SessionService& service, const std::string& host, int port, std::function<void(const std::string&)> log) {
  httplib::Server server;
  // The library default also sets SO_REUSEPORT, which lets a second server
  // share a busy port silently.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  service.install(server, std::move(log));
  if (!server.bind_to_port(host, port)) return false;
  return server.listen_after_bind();
}

}  // namespace tmkit
