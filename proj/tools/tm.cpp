// tm: validate, render, simulate and serve thinging-machine models.
//
// Exit codes: 0 success, 1 semantic failure, 2 usage or environment failure.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tm/behavior.hpp"
#include "tm/dsl.hpp"
#include "tm/render.hpp"
#include "tm/service.hpp"
#include "tm/sim.hpp"

namespace fs = std::filesystem;
using namespace tmkit;

namespace {

constexpr int kOk = 0;
constexpr int kSemantic = 1;
constexpr int kEnvironment = 2;

bool use_color() { return std::getenv("TM_NO_COLOR") == nullptr && isatty(fileno(stderr)); }

void print_diagnostics(const std::vector<Diagnostic>& diags, bool json) {
  if (json) {
    std::cout << dump_json(diagnostics_to_json(diags));
    return;
  }
  const bool color = use_color();
  for (const auto& d : diags) {
    std::string line = format_diagnostic(d);
    if (color) line = (d.severity == Severity::Error ? "\x1b[31m" : "\x1b[33m") + line + "\x1b[0m";
    std::cerr << line << "\n";
  }
}

void fail_message(const std::string& msg) {
  if (use_color()) std::cerr << "\x1b[31merror:\x1b[0m " << msg << "\n";
  else std::cerr << "error: " << msg << "\n";
}

// Parses and validates; returns an exit code on failure.
std::optional<Model> load_model(const std::string& path, bool json, int& rc, bool print_ok_diags = false) {
  ParseResult pr;
  try {
    pr = parse_file(path);
  } catch (const Error& e) {
    fail_message(e.what());
    rc = kEnvironment;
    return std::nullopt;
  }
  if (!pr.ok()) {
    print_diagnostics(pr.diagnostics, json);
    // Syntax errors are usage failures; unresolved names are semantic ones.
    rc = kSemantic;
    for (const auto& d : pr.diagnostics)
      if (d.code == code::kParse) rc = kEnvironment;
    return std::nullopt;
  }
  auto diags = validate(*pr.model);
  if (has_errors(diags)) {
    print_diagnostics(diags, json);
    rc = kSemantic;
    return std::nullopt;
  }
  if (print_ok_diags) print_diagnostics(diags, json);
  rc = kOk;
  return std::move(pr.model);
}

std::optional<std::string> scenario_path(const std::string& model_path, const std::string& name) {
  if (fs::is_regular_file(name)) return name;
  fs::path p = fs::path(model_path).parent_path() / "scenarios" / (name + ".scenario");
  if (fs::is_regular_file(p)) return p.string();
  return std::nullopt;
}

bool write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return true;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) return false;
  f << text;
  return static_cast<bool>(f);
}

int cmd_validate(const std::string& path, bool json) {
  int rc = kOk;
  auto model = load_model(path, json, rc, true);
  if (model && !json) std::cerr << path << ": ok\n";
  return rc;
}

int cmd_render(const std::string& path, const std::string& format, const std::string& out, bool json) {
  int rc = kOk;
  auto model = load_model(path, json, rc);
  if (!model) return rc;
  std::string text;
  try {
    if (format == "dot") text = to_dot(*model);
    else if (format == "json") text = to_json(*model);
    else text = render_behavior(model->behavior_graph());
  } catch (const Error& e) {
    fail_message(e.what());
    return kSemantic;
  }
  if (!write_output(out, text)) {
    fail_message("cannot write '" + out + "'");
    return kEnvironment;
  }
  return kOk;
}

struct SimOptions {
  std::string scenario;
  std::size_t max_steps = 10000;
  bool check = false;
  std::optional<std::int64_t> window;
  std::string out;
};

int cmd_sim(const std::string& path, const SimOptions& opt, bool json) {
  int rc = kOk;
  auto model = load_model(path, json, rc);
  if (!model) return rc;
  Scenario sc;
  if (!opt.scenario.empty()) {
    auto sp = scenario_path(path, opt.scenario);
    if (!sp) {
      fail_message("scenario '" + opt.scenario + "' not found");
      return kEnvironment;
    }
    try {
      sc = load_scenario(*sp);
    } catch (const Error& e) {
      fail_message(e.what());
      return kEnvironment;
    }
  }
  if (opt.window && *opt.window < 1) {
    fail_message("anomaly window must be at least 1");
    return kEnvironment;
  }
  Json doc;
  bool violated = false;
  try {
    SimState state = new_session(*model, sc);
    const StepLog& log = run(state, opt.max_steps);
    EventTrace trace = extract_events(log, *model);
    doc["log"] = steplog_to_json(log);
    doc["trace"] = trace_to_json(trace);
    if (opt.check) {
      auto report = conforms(trace, model->behavior_graph());
      doc["conformance"] = conformance_to_json(report);
      violated = violated || !report.conformant();
    }
    if (opt.window) {
      auto anomalies = detect_transfer_without_receive(log, *opt.window);
      doc["anomalies"] = anomalies_to_json(anomalies, *model);
      violated = violated || !anomalies.empty();
      for (const auto& a : anomalies)
        std::cerr << "anomaly: token " << a.token << " transferred from " << display_path(*model, a.from)
                  << " was not received at " << display_path(*model, a.expected) << " by time " << a.detected_at
                  << "\n";
    }
  } catch (const Error& e) {
    fail_message(std::string(e.code()) + ": " + e.what());
    return kEnvironment;
  }
  if (!write_output(opt.out, dump_json(doc))) {
    fail_message("cannot write '" + opt.out + "'");
    return kEnvironment;
  }
  return violated ? kSemantic : kOk;
}

std::string timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_buf{};
  gmtime_r(&now, &tm_buf);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_buf);
  return buf;
}

int cmd_serve(const std::string& path, const std::string& host, int port, std::size_t cap, bool json) {
  int rc = kOk;
  auto model = load_model(path, json, rc);
  if (!model) return rc;
  ServiceOptions opt;
  opt.session_cap = cap;
  opt.scenario_dir = (fs::path(path).parent_path() / "scenarios").string();
  SessionService service(std::make_shared<const Model>(std::move(*model)), opt);
  std::cerr << "serving " << path << " on " << host << ":" << port << "\n";
  bool ok = serve(service, host, port, [](const std::string& line) { std::cerr << timestamp() << " " << line << "\n"; });
  if (!ok) {
    fail_message("cannot bind " + host + ":" + std::to_string(port));
    return kEnvironment;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thinging-machine model toolchain"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "Machine-readable diagnostics");

  std::string path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a model and print diagnostics");
  validate_cmd->add_option("model", path, "Model file")->required();
  validate_cmd->add_flag("--json", json, "Machine-readable diagnostics");

  std::string format = "dot";
  std::string out;
  auto* render_cmd = app.add_subcommand("render", "Export a model as DOT or JSON, or its behavior graph");
  render_cmd->add_option("model", path, "Model file")->required();
  render_cmd->add_option("--format", format, "dot, json or behavior")
      ->check(CLI::IsMember({"dot", "json", "behavior"}));
  render_cmd->add_option("--out,-o", out, "Output file (default stdout)");
  render_cmd->add_flag("--json", json, "Machine-readable diagnostics");

  SimOptions sim;
  std::int64_t window = 0;
  auto* sim_cmd = app.add_subcommand("sim", "Run a scenario and print the step log and event trace");
  sim_cmd->add_option("model", path, "Model file")->required();
  sim_cmd->add_option("--scenario", sim.scenario, "Scenario name (scenarios/<name>.scenario) or file");
  sim_cmd->add_option("--max-steps", sim.max_steps, "Step budget")->check(CLI::NonNegativeNumber);
  sim_cmd->add_flag("--check", sim.check, "Check the event trace against the behavior graph");
  auto* anomalies_opt = sim_cmd->add_option("--anomalies", window, "Report transfers not received within W steps");
  sim_cmd->add_option("--out,-o", sim.out, "Output file (default stdout)");
  sim_cmd->add_flag("--json", json, "Machine-readable diagnostics");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t cap = 64;
  if (const char* env = std::getenv("TM_SESSION_CAP")) {
    try {
      cap = static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      std::cerr << "error: TM_SESSION_CAP must be a positive integer\n";
      return kEnvironment;
    }
  }
  auto* serve_cmd = app.add_subcommand("serve", "Serve the session API for a model");
  serve_cmd->add_option("model", path, "Model file")->required();
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--session-cap", cap, "Maximum live sessions")->check(CLI::PositiveNumber);
  serve_cmd->add_flag("--json", json, "Machine-readable diagnostics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kEnvironment;
  }

  if (*validate_cmd) return cmd_validate(path, json);
  if (*render_cmd) return cmd_render(path, format, out, json);
  if (*sim_cmd) {
    if (*anomalies_opt) sim.window = window;
    return cmd_sim(path, sim, json);
  }
  return cmd_serve(path, host, port, cap, json);
}
