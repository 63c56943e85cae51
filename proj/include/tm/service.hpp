#pragma once

// HTTP/JSON session service over one loaded model. SessionService holds the
// request handlers so they can be exercised without a socket; serve() binds
// them to an HTTP listener.

#include <atomic>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "tm/render.hpp"
#include "tm/sim.hpp"

namespace httplib {
class Server;
}

namespace tmkit {

struct Response {
  int status = 200;
  Json body;
};

struct ServiceOptions {
  std::size_t session_cap = 64;
  std::size_t max_auto_steps = 10000;  // per request, when running to quiescence
  /// Directory searched for `<name>.scenario` on POST /sessions {"scenario": name}.
  std::string scenario_dir;
};

class SessionService {
 public:
  SessionService(std::shared_ptr<const Model> model, ServiceOptions options = {});

  const std::string& model_json() const { return model_json_; }

  Response get_model() const;
  Response create_session(const Json& body);
  Response get_view(const std::string& id);
  Response post_action(const std::string& id, const Json& body);
  Response get_trace(const std::string& id);
  Response get_anomalies(const std::string& id, const std::optional<std::string>& window);
  Response get_log(const std::string& id);

  std::size_t session_count() const;

  /// Registers the routes on `server`; `log` receives one line per request.
  void install(httplib::Server& server, std::function<void(const std::string&)> log = {});

 private:
  struct Session {
    std::mutex mu;
    SimState state;
    std::optional<ChoiceNeeded> pending;
    explicit Session(SimState s) : state(std::move(s)) {}
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  Json view_json(const std::string& id, const Session& s) const;
  void settle(Session& s);

  std::shared_ptr<const Model> model_;
  ServiceOptions options_;
  std::string model_json_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<std::uint64_t> next_id_{1};
};

/// Parses an action body: {"type": "click_stage", "path": ...} and friends,
/// or the shorthand {"click_stage": path}. Returns nullopt for "choose".
std::optional<Action> action_from_json(const Json& body);

/// Runs an HTTP server until it is stopped. Returns false if binding fails.
bool serve(SessionService& service, const std::string& host, int port,
           std::function<void(const std::string&)> log = {});

}  // namespace tmkit
