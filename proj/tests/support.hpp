#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tm/dsl.hpp"
#include "tm/model.hpp"
#include "tm/sim.hpp"

#ifndef TM_MODELS_DIR
#error "TM_MODELS_DIR must point at the corpus directory"
#endif

namespace tmtest {

inline std::string models_dir() { return TM_MODELS_DIR; }
inline std::string model_path(const std::string& name) { return models_dir() + "/" + name; }
inline std::string scenario_file(const std::string& name) { return models_dir() + "/scenarios/" + name + ".scenario"; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline tmkit::Model parse_or_throw(const std::string& text, const std::string& file = {}) {
  auto r = tmkit::parse(text, file);
  if (!r.ok()) {
    std::string msg;
    for (const auto& d : r.diagnostics) msg += tmkit::format_diagnostic(d) + "\n";
    throw std::runtime_error("parse failed:\n" + msg);
  }
  return std::move(*r.model);
}

inline tmkit::Model load(const std::string& name) { return parse_or_throw(read_file(model_path(name)), name); }

inline tmkit::Scenario scenario(const std::string& name) { return tmkit::load_scenario(scenario_file(name)); }

/// Runs a corpus scenario to quiescence.
inline tmkit::StepLog run_scenario(const tmkit::Model& m, const std::string& name, std::size_t max_steps = 10000) {
  tmkit::SimState st = tmkit::new_session(m, scenario(name));
  return tmkit::run(st, max_steps);
}

/// Random model source text. The models parse but need not validate; they
/// exercise nesting, placements, every domain kind, guards, named and
/// unnamed edges, events and behavior arcs, with random spacing, comments and
/// keyword case.
class ModelGenerator {
 public:
  explicit ModelGenerator(std::uint64_t seed) : rng_(seed) {}

  std::string generate(int index) {
    out_.str({});
    out_.clear();
    machines_.clear();
    things_.clear();
    named_edges_.clear();
    stage_paths_.clear();
    attr_paths_.clear();
    events_.clear();

    kw("model");
    out_ << " g" << index << sep() << "\n";
    if (coin(0.3)) {
      kw("navigator");
      out_ << " t0;\n";
    }
    int nthings = pick(1, 4);
    for (int i = 0; i < nthings; ++i) thing(i);
    out_ << comment();
    machine("R", "R", std::nullopt, 0);
    int nedges = pick(0, 8);
    for (int i = 0; i < nedges; ++i) edge(i);
    int nevents = stage_paths_.empty() ? 0 : pick(0, 4);
    for (int i = 0; i < nevents; ++i) event(i);
    if (!events_.empty() && coin(0.7)) behavior();
    return out_.str();
  }

 private:
  bool coin(double p) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  template <class T>
  const T& any(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(pick(0, static_cast<int>(v.size()) - 1))];
  }

  void kw(const std::string& word) {
    std::string w = word;
    if (coin(0.15))
      for (auto& c : w) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    out_ << w;
  }
  std::string sep() { return coin(0.5) ? ";" : ""; }
  std::string sp() { return coin(0.2) ? "  " : " "; }
  std::string comment() { return coin(0.2) ? "# note " + std::to_string(pick(0, 99)) + "\n" : ""; }

  std::string domain(std::string& literal) {
    switch (pick(0, 2)) {
      case 0: {
        std::vector<std::string> vals;
        int n = pick(1, 3);
        for (int i = 0; i < n; ++i) vals.push_back("v" + std::to_string(i));
        literal = coin(0.5) ? "\"" + any(vals) + "\"" : any(vals);
        std::string d = "{";
        for (std::size_t i = 0; i < vals.size(); ++i) d += (i ? ", " : "") + vals[i];
        return d + "}";
      }
      case 1:
        literal = coin(0.5) ? "true" : "false";
        return "bool";
      default: {
        int lo = pick(-3, 2);
        int hi = lo + pick(0, 4);
        literal = std::to_string(pick(lo, hi));
        return "int[" + std::to_string(lo) + ".." + std::to_string(hi) + "]";
      }
    }
  }

  void thing(int i) {
    std::string id = "t" + std::to_string(i);
    things_.push_back(id);
    out_ << comment();
    kw("thing");
    out_ << " " << id << " {";
    int nf = pick(0, 2);
    for (int f = 0; f < nf; ++f) {
      std::string lit;
      out_ << (f ? ", " : " ") << "f" << f << ":" << sp() << domain(lit);
      if (coin(0.4)) out_ << " = " << lit;
    }
    out_ << (nf ? " }" : "}") << "\n";
  }

  void machine(const std::string& name, const std::string& path, std::optional<std::string> parent_stage, int depth) {
    static const std::vector<std::string> kStages = {"create", "process", "release", "transfer", "receive"};
    static const std::vector<std::string> kNames = {"A", "B", "Hall", "Room", "Door", "Unit"};
    std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    out_ << pad;
    kw("machine");
    out_ << " " << name;
    if (parent_stage) out_ << " at " << *parent_stage;
    out_ << " {\n";
    machines_.push_back(path);
    std::vector<std::string> mine;
    for (const auto& s : kStages)
      if (coin(0.6)) mine.push_back(s);
    if (!mine.empty()) {
      out_ << pad << "  ";
      kw("stages");
      out_ << " ";
      for (std::size_t i = 0; i < mine.size(); ++i) out_ << (i ? "," + sp() : "") << mine[i];
      out_ << ";\n";
      for (const auto& s : mine) stage_paths_.push_back(path + "." + s);
    }
    int nattrs = pick(0, 2);
    for (int a = 0; a < nattrs; ++a) {
      std::string lit;
      std::string dom = domain(lit);
      out_ << pad << "  ";
      kw(coin(0.3) ? "process" : "attr");
      out_ << " a" << a << ": " << dom << " = " << lit << ";\n";
      attr_paths_.push_back(path + ".a" + std::to_string(a));
    }
    if (!mine.empty() && coin(0.3)) out_ << pad << "  resident " << any(things_) << " at " << any(mine) << ";\n";
    if (depth < 3) {
      std::vector<std::string> used;
      int nkids = pick(0, depth == 0 ? 3 : 2);
      for (int k = 0; k < nkids; ++k) {
        std::string child = any(kNames);
        if (std::find(used.begin(), used.end(), child) != used.end()) continue;
        used.push_back(child);
        std::optional<std::string> at;
        if (!mine.empty() && coin(0.3)) at = any(mine);
        machine(child, path + "." + child, at, depth + 1);
      }
    }
    out_ << pad << "}" << sep() << "\n";
  }

  void edge(int i) {
    if (stage_paths_.empty()) return;
    bool trigger = coin(0.3);
    kw(trigger ? "trigger" : "flow");
    out_ << " ";
    if (coin(0.5)) {
      std::string name = "e" + std::to_string(i);
      named_edges_.push_back(name);
      out_ << name << ": ";
    }
    out_ << any(stage_paths_) << sp() << (trigger ? "~>" : "->") << sp() << any(stage_paths_);
    if (coin(0.4)) {
      int g = pick(0, 2);
      if (g == 0) out_ << " [f0 " << (coin(0.5) ? "=" : "!=") << " " << pick(0, 3) << "]";
      else if (g == 1) out_ << " [thing = \"" << any(things_) << "\"]";
      else if (!attr_paths_.empty()) out_ << " [" << any(attr_paths_) << " = true]";
    }
    if (coin(0.6)) out_ << " carries " << any(things_);
    out_ << ";\n";
  }

  void event(int i) {
    std::vector<std::string> elems;
    int n = pick(1, 3);
    for (int k = 0; k < n; ++k) {
      if (!named_edges_.empty() && coin(0.4)) elems.push_back(any(named_edges_));
      else elems.push_back(any(stage_paths_));
    }
    std::string id = "E" + std::to_string(i + 1);
    events_.push_back(id);
    kw("event");
    out_ << " " << id;
    if (coin(0.7)) out_ << " \"label " << i << "\"";
    out_ << " region {";
    for (std::size_t k = 0; k < elems.size(); ++k) out_ << (k ? ", " : " ") << elems[k];
    out_ << " } anchor " << any(elems) << ";\n";
  }

  void behavior() {
    kw("behavior");
    out_ << " {\n";
    int n = pick(0, 5);
    for (int k = 0; k < n; ++k) {
      out_ << "  " << any(events_) << " -> " << any(events_);
      if (coin(0.3)) out_ << " loop";
      out_ << (k + 1 == n ? sep() : ";") << "\n";
    }
    out_ << "}\n";
  }

  std::mt19937_64 rng_;
  std::ostringstream out_;
  std::vector<std::string> machines_, things_, named_edges_, stage_paths_, attr_paths_, events_;
};

}  // namespace tmtest
