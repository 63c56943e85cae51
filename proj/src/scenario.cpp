#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tm/dsl.hpp"
#include "tm/sim.hpp"

namespace tmkit {

namespace {

struct Word {
  std::string text;
  bool quoted = false;
};

// Splits a line into words; quotes group, and the characters {}=, stand alone.
std::vector<Word> split_words(std::string_view line, const std::string& where) {
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '{' || c == '}' || c == '=' || c == ',') {
      out.push_back({std::string(1, c), false});
      ++i;
      continue;
    }
    if (c == '"') {
      std::string value;
      ++i;
      while (i < line.size() && line[i] != '"') {
        if (line[i] == '\\' && i + 1 < line.size()) ++i;
        value += line[i++];
      }
      if (i >= line.size()) throw Error(code::kScenario, where + ": unterminated string");
      ++i;
      out.push_back({std::move(value), true});
      continue;
    }
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '{' &&
           line[i] != '}' && line[i] != '=' && line[i] != ',' && line[i] != '#')
      ++i;
    out.push_back({std::string(line.substr(start, i - start)), false});
  }
  return out;
}

Value literal_of(const Word& w) {
  if (w.quoted) return Value{w.text};
  if (w.text == "true") return Value{true};
  if (w.text == "false") return Value{false};
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(w.text.data(), w.text.data() + w.text.size(), v);
  if (ec == std::errc{} && p == w.text.data() + w.text.size()) return Value{v};
  return Value{w.text};
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::string& file) {
  Scenario sc;
  std::istringstream in(normalize_newlines(text));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = (file.empty() ? "<scenario>" : file) + ":" + std::to_string(lineno);
    auto words = split_words(line, where);
    if (words.empty()) continue;
    const std::string kw = words[0].text;
    auto need = [&](std::size_t n) {
      if (words.size() < n) throw Error(code::kScenario, where + ": incomplete '" + kw + "' line");
    };
    if (kw == "scenario") {
      need(2);
      sc.name = words[1].text;
    } else if (kw == "mode") {
      need(2);
      if (words[1].text == "strict") sc.mode = ChoiceMode::Strict;
      else if (words[1].text == "explore") sc.mode = ChoiceMode::Explore;
      else throw Error(code::kScenario, where + ": mode must be strict or explore");
    } else if (kw == "seed") {
      need(2);
      std::uint64_t seed = 0;
      const auto& s = words[1].text;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
      if (ec != std::errc{} || p != s.data() + s.size()) throw Error(code::kScenario, where + ": bad seed");
      sc.seed = seed;
    } else if (kw == "choose") {
      need(3);
      std::size_t v = words[2].text == "=" && !words[2].quoted ? 3 : 2;
      if (words.size() <= v) throw Error(code::kScenario, where + ": choose needs a value");
      sc.choices.push_back({words[1].text, words[v].text});
    } else if (kw == "set") {
      need(4);
      if (words[2].text != "=") throw Error(code::kScenario, where + ": expected '=' in set");
      sc.actions.push_back(Action::set(words[1].text, literal_of(words[3])));
    } else if (kw == "click") {
      need(2);
      sc.actions.push_back(Action::click(words[1].text));
    } else if (kw == "inject") {
      need(4);
      if (words[2].text != "at") throw Error(code::kScenario, where + ": expected 'inject THING at STAGE'");
      Action a = Action::inject(words[1].text, words[3].text);
      std::size_t i = 4;
      if (i < words.size()) {
        if (words[i].text != "{") throw Error(code::kScenario, where + ": expected '{' before payload");
        ++i;
        while (i < words.size() && words[i].text != "}") {
          if (i + 2 >= words.size() || words[i + 1].text != "=")
            throw Error(code::kScenario, where + ": payload entries are 'field = value'");
          a.payload.emplace_back(words[i].text, literal_of(words[i + 2]));
          i += 3;
          if (i < words.size() && words[i].text == ",") ++i;
        }
        if (i >= words.size()) throw Error(code::kScenario, where + ": missing '}'");
      }
      sc.actions.push_back(std::move(a));
    } else {
      throw Error(code::kScenario, where + ": unknown directive '" + kw + "'");
    }
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(code::kScenario, "cannot read scenario '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

}  // namespace tmkit
