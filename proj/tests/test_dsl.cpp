#include <doctest.h>

#include <algorithm>
#include <random>

#include "support.hpp"
#include "tm/dsl.hpp"

using namespace tmkit;

namespace {

// Splits into lines so spans can be checked against the text's bounds.
std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out(1);
  for (char c : text) {
    if (c == '\n') out.emplace_back();
    else out.back() += c;
  }
  return out;
}

std::size_t code_points(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

void check_spans_in_bounds(const std::string& text, const std::vector<Diagnostic>& diags) {
  auto lines = lines_of(text);
  for (const auto& d : diags) {
    REQUIRE_MESSAGE(d.span.has_value(), format_diagnostic(d));
    const auto& s = *d.span;
    INFO(format_diagnostic(d));
    CHECK(s.start_line >= 1);
    CHECK(s.end_line <= static_cast<int>(lines.size()));
    CHECK(std::make_pair(s.start_line, s.start_col) <= std::make_pair(s.end_line, s.end_col));
    CHECK(s.start_col >= 1);
    const auto& last = lines[static_cast<std::size_t>(s.end_line - 1)];
    CHECK(s.end_col <= static_cast<int>(code_points(last)) + 1);
  }
}

}  // namespace

TEST_CASE("minimal program") {
  auto r = parse("model M  machine A { stages create }");
  REQUIRE(r.ok());
  REQUIRE(r.model->machines.size() == 1);
  CHECK(r.model->machines[0].stages == std::vector<StageKind>{StageKind::Create});
}

TEST_CASE("login corpus parses into the expected elements") {
  Model m = tmtest::load("login_shapes.tm");
  CHECK(m.machine("Interface.User"));
  CHECK(m.machine("Interface.System"));
  for (const char* t : {"request", "menu", "selection", "circle", "line"}) CHECK(m.thing(t));
  REQUIRE(m.events.size() == 9);
  for (int i = 0; i < 9; ++i) CHECK(m.events[static_cast<std::size_t>(i)].id == "E" + std::to_string(i + 1));
  REQUIRE(m.behavior);
  CHECK(m.behavior->arcs.size() == 10);
}

TEST_CASE("declaration order follows the source") {
  Model m = tmtest::parse_or_throw(R"(model m
thing b {}
thing a {}
machine Z { stages create, release; }
flow Z.create -> Z.release carries a;
)");
  REQUIRE(m.declaration_order.size() == 4);
  CHECK(m.declaration_order[0].id == "b");
  CHECK(m.declaration_order[1].id == "a");
  CHECK(m.declaration_order[2].kind == Decl::Kind::Machine);
  CHECK(m.declaration_order[3].kind == Decl::Kind::Edge);
  CHECK(m.spans.count("b") == 1);
}

TEST_CASE("truncated statement reports E_PARSE at end of input") {
  std::string text = "model M\nmachine A { stages release; }\nflow A.release -> ";
  auto r = parse(text);
  CHECK_FALSE(r.ok());
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].code == code::kParse);
  REQUIRE(r.diagnostics[0].span);
  CHECK(r.diagnostics[0].span->start_line == 3);
  CHECK(r.diagnostics[0].span->start_col == 19);
  check_spans_in_bounds(text, r.diagnostics);
}

TEST_CASE("parser recovers and reports several errors") {
  std::string text = "model M\nthing {}\nmachine A { stages bogus; }\nflow ;\nthing ok {}\n";
  auto r = parse(text);
  CHECK_FALSE(r.ok());
  CHECK(r.diagnostics.size() >= 3);
  for (const auto& d : r.diagnostics) CHECK(d.code == code::kParse);
  check_spans_in_bounds(text, r.diagnostics);
}

TEST_CASE("reserved names cannot name machines") {
  auto r = parse("model M\nmachine transfer {}\n");
  CHECK_FALSE(r.ok());
  CHECK(r.diagnostics.at(0).code == code::kParse);
}

TEST_CASE("resolution errors carry spans") {
  std::string text = "model M\nthing x {}\nmachine A { stages create; }\nflow A.create -> B.release carries x;\n";
  auto r = parse(text);
  CHECK_FALSE(r.ok());
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].code == code::kNoPath);
  CHECK(r.diagnostics[0].span->start_line == 4);
  check_spans_in_bounds(text, r.diagnostics);
}

TEST_CASE("CRLF and CR newlines are normalized") {
  std::string lf = tmtest::read_file(tmtest::model_path("login_shapes.tm"));
  std::string crlf;
  for (char c : lf) crlf += c == '\n' ? std::string("\r\n") : std::string(1, c);
  Model a = tmtest::parse_or_throw(lf);
  Model b = tmtest::parse_or_throw(crlf);
  CHECK(a.structurally_equal(b));
  CHECK(normalize_newlines("a\rb\r\nc") == "a\nb\nc");
}

TEST_CASE("keywords are case-insensitive and serialize lowercase") {
  Model m = tmtest::parse_or_throw("MODEL M\nMachine A { STAGES Create, Release; }\nFLOW A.CREATE -> A.Release;\n");
  std::string s = serialize(m);
  CHECK(s.find("machine A {") != std::string::npos);
  CHECK(s.find("stages create, release;") != std::string::npos);
  CHECK(s.find("flow A.create -> A.release;") != std::string::npos);
}

TEST_CASE("minimal program round-trips") {
  Model m = tmtest::parse_or_throw("model M  machine A { stages create }");
  Model again = tmtest::parse_or_throw(serialize(m));
  CHECK(m.structurally_equal(again));
}

TEST_CASE("corpus round-trip and canonical fixpoint") {
  for (const char* name : {"login_shapes.tm", "digital_home.tm"}) {
    INFO(name);
    Model m1 = tmtest::load(name);
    std::string s1 = serialize(m1);
    Model m2 = tmtest::parse_or_throw(s1);
    CHECK(m1.structurally_equal(m2));
    CHECK(serialize(m2) == s1);
  }
}

TEST_CASE("generated models round-trip") {
  tmtest::ModelGenerator gen(2024);
  for (int i = 0; i < 250; ++i) {
    const std::string text = gen.generate(i);
    auto r1 = parse(text);
    REQUIRE_MESSAGE(r1.ok(), text);
    const std::string s1 = serialize(*r1.model);
    auto r2 = parse(s1);
    REQUIRE_MESSAGE(r2.ok(), s1);
    INFO(text);
    CHECK(r1.model->structurally_equal(*r2.model));
    CHECK(serialize(*r2.model) == s1);
  }
}

TEST_CASE("shuffled declaration order serializes in that order") {
  Model m = tmtest::parse_or_throw("model M\nthing a {}\nthing b {}\nthing c {}\nmachine A {}\n");
  std::rotate(m.declaration_order.begin(), m.declaration_order.begin() + 2, m.declaration_order.end());
  std::string s = serialize(m);
  auto pos = [&](const std::string& needle) { return s.find(needle); };
  CHECK(pos("thing c") < pos("machine A"));
  CHECK(pos("machine A") < pos("thing a"));
  CHECK(pos("thing a") < pos("thing b"));
}

TEST_CASE("random corruption never produces a panic or out-of-bounds span") {
  std::string base = tmtest::read_file(tmtest::model_path("digital_home.tm"));
  std::mt19937_64 rng(5);
  const std::string junk = "{}[];:.->~>=\"#x1 \n";
  for (int i = 0; i < 200; ++i) {
    std::string text = base;
    int edits = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < edits; ++k) {
      std::size_t at = rng() % text.size();
      if (rng() % 2) text.erase(at, 1 + rng() % 5);
      else text.insert(at, 1, junk[rng() % junk.size()]);
    }
    auto r = parse(text);
    if (!r.ok()) check_spans_in_bounds(normalize_newlines(text), r.diagnostics);
  }
}

TEST_CASE("quote_if_needed") {
  CHECK(quote_if_needed("abc") == "abc");
  CHECK(quote_if_needed("a b") == "\"a b\"");
}
