#include "tm/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace tmkit {

std::string normalize_newlines(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      out += '\n';
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      out += text[i];
    }
  }
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Lexer

enum class Tok {
  Ident, String, Int, LBrace, RBrace, LBracket, RBracket, Comma, Semi, Colon, Dot, DotDot,
  Arrow, Squiggle, Eq, Ne, End, Bad
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1, col = 1, end_line = 1, end_col = 1;
};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::End: return "end of input";
    case Tok::String: return "string \"" + t.text + "\"";
    case Tok::Bad: return "invalid input '" + t.text + "'";
    default: return "'" + t.text + "'";
  }
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      Token t;
      t.line = line_;
      t.col = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        t.end_line = line_;
        t.end_col = col_;
        out.push_back(t);
        return out;
      }
      lex_one(t);
      t.end_line = line_;
      t.end_col = col_;
      out.push_back(std::move(t));
    }
  }

 private:
  char peek(std::size_t off = 0) const { return pos_ + off < src_.size() ? src_[pos_ + off] : '\0'; }

  void advance() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
      ++col_;
    }
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\n') {
        advance();
      } else if (c == '#') {
        while (pos_ < src_.size() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  void punct(Token& t, Tok kind, std::size_t len) {
    t.kind = kind;
    t.text = std::string(src_.substr(pos_, len));
    for (std::size_t i = 0; i < len; ++i) advance();
  }

  void lex_one(Token& t) {
    char c = peek();
    if (is_ident_start(c)) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && is_ident_char(peek())) advance();
      t.kind = Tok::Ident;
      t.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      std::size_t start = pos_;
      advance();
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
      t.kind = Tok::Int;
      t.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    if (c == '"') {
      advance();
      std::string value;
      while (pos_ < src_.size() && peek() != '"' && peek() != '\n') {
        if (peek() == '\\' && pos_ + 1 < src_.size()) {
          advance();
          char e = peek();
          value += e == 'n' ? '\n' : e;
          advance();
        } else {
          value += peek();
          advance();
        }
      }
      if (peek() != '"') {
        t.kind = Tok::Bad;
        t.text = "unterminated string";
        return;
      }
      advance();
      t.kind = Tok::String;
      t.text = std::move(value);
      return;
    }
    switch (c) {
      case '{': return punct(t, Tok::LBrace, 1);
      case '}': return punct(t, Tok::RBrace, 1);
      case '[': return punct(t, Tok::LBracket, 1);
      case ']': return punct(t, Tok::RBracket, 1);
      case ',': return punct(t, Tok::Comma, 1);
      case ';': return punct(t, Tok::Semi, 1);
      case ':': return punct(t, Tok::Colon, 1);
      case '=': return punct(t, Tok::Eq, 1);
      case '.': return peek(1) == '.' ? punct(t, Tok::DotDot, 2) : punct(t, Tok::Dot, 1);
      case '-':
        if (peek(1) == '>') return punct(t, Tok::Arrow, 2);
        break;
      case '~':
        if (peek(1) == '>') return punct(t, Tok::Squiggle, 2);
        break;
      case '!':
        if (peek(1) == '=') return punct(t, Tok::Ne, 2);
        break;
      default: break;
    }
    if (src_.substr(pos_, 3) == "\xE2\x89\xA0") {  // U+2260
      punct(t, Tok::Ne, 3);
      return;
    }
    // One code point of garbage.
    std::size_t len = 1;
    while (pos_ + len < src_.size() && (static_cast<unsigned char>(src_[pos_ + len]) & 0xC0) == 0x80) ++len;
    punct(t, Tok::Bad, len);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

// ---------------------------------------------------------------------------
// Parser

struct RawPath {
  std::string text;
  SourceSpan span;
};

struct RawElem {
  RawPath first;
  std::optional<EdgeKind> arrow;
  RawPath second;
};

struct RawEdge {
  std::optional<std::string> name;
  RawPath src, dst;
  EdgeKind kind = EdgeKind::Flow;
  std::optional<std::string> carries;
  std::optional<Guard> guard;
  SourceSpan span;
  std::size_t decl_index = 0;
};

struct RawEvent {
  std::string id;
  std::string label;
  std::vector<RawElem> elements;
  RawElem anchor;
  SourceSpan span;
};

struct ParseFail {
  Diagnostic diag;
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

class Parser {
 public:
  Parser(std::vector<Token> toks, std::string file) : toks_(std::move(toks)), file_(std::move(file)) {}

  ParseResult run() {
    try {
      expect_keyword("model");
      Token name = expect(Tok::Ident, "model name");
      model_.name = name.text;
      if (at(Tok::Semi)) next();
    } catch (const ParseFail& f) {
      diags_.push_back(f.diag);
      return finish();
    }
    while (!at(Tok::End)) {
      std::size_t before = pos_;
      try {
        top_statement();
      } catch (const ParseFail& f) {
        diags_.push_back(f.diag);
        sync(before);
      }
    }
    if (diags_.empty()) resolve();
    return finish();
  }

 private:
  // -- token helpers -------------------------------------------------------
  const Token& peek(std::size_t off = 0) const { return toks_[std::min(pos_ + off, toks_.size() - 1)]; }
  bool at(Tok k) const { return peek().kind == k; }
  bool at_keyword(std::string_view kw) const { return at(Tok::Ident) && lower(peek().text) == kw; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }

  SourceSpan span_of(const Token& t) const { return {file_, t.line, t.col, t.end_line, t.end_col}; }
  SourceSpan span_between(const Token& a, const Token& b) const {
    return {file_, a.line, a.col, b.end_line, b.end_col};
  }
  const Token& prev() const { return toks_[pos_ == 0 ? 0 : pos_ - 1]; }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    throw ParseFail{{Severity::Error, code::kParse, msg, span_of(t), std::nullopt}};
  }

  Token expect(Tok k, const std::string& what) {
    if (!at(k)) fail(peek(), "expected " + what + ", found " + describe(peek()));
    return next();
  }

  void expect_keyword(std::string_view kw) {
    if (!at_keyword(kw)) fail(peek(), "expected '" + std::string(kw) + "', found " + describe(peek()));
    next();
  }

  void end_statement() {
    if (at(Tok::Semi)) {
      next();
      return;
    }
    if (at(Tok::RBrace)) return;
    fail(peek(), "expected ';', found " + describe(peek()));
  }

  // Skips to just past the next ';' or to the '}' that closes the current
  // block. Always makes progress.
  void sync(std::size_t start) {
    if (pos_ == start && !at(Tok::End) && !at(Tok::RBrace)) next();
    int depth = 0;
    while (!at(Tok::End)) {
      if (at(Tok::LBrace)) ++depth;
      if (at(Tok::RBrace)) {
        if (depth == 0) return;
        --depth;
        next();
        if (depth == 0 && statement_start()) return;
        continue;
      }
      if (at(Tok::Semi) && depth == 0) {
        next();
        return;
      }
      next();
    }
  }

  bool statement_start() const {
    static const char* kws[] = {"machine", "thing", "flow", "trigger", "event", "behavior", "navigator"};
    for (const char* k : kws)
      if (at_keyword(k)) return true;
    return false;
  }

  RawPath path() {
    Token first = expect(Tok::Ident, "path");
    RawPath p{first.text, span_of(first)};
    while (at(Tok::Dot)) {
      next();
      Token seg = expect(Tok::Ident, "path segment");
      p.text += "." + seg.text;
      p.span.end_line = seg.end_line;
      p.span.end_col = seg.end_col;
    }
    return p;
  }

  StageKind stage_keyword_token() {
    Token t = expect(Tok::Ident, "stage name");
    auto k = parse_stage(t.text);
    if (!k) fail(t, "'" + t.text + "' is not a stage (create, process, release, transfer, receive)");
    return *k;
  }

  Value literal() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::String: return Value{next().text};
      case Tok::Int: {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc{}) fail(t, "integer literal out of range");
        next();
        return Value{v};
      }
      case Tok::Ident:
        if (t.text == "true" || t.text == "false") return Value{next().text == "true"};
        return Value{next().text};
      default: fail(t, "expected a literal, found " + describe(t));
    }
  }

  std::int64_t int_literal() {
    Token t = expect(Tok::Int, "integer");
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{}) fail(t, "integer literal out of range");
    return v;
  }

  Domain domain() {
    if (at(Tok::LBrace)) {
      next();
      std::vector<std::string> values;
      while (true) {
        if (at(Tok::Ident) || at(Tok::String)) {
          values.push_back(next().text);
        } else {
          fail(peek(), "expected an enumeration value, found " + describe(peek()));
        }
        if (at(Tok::Comma)) {
          next();
          continue;
        }
        expect(Tok::RBrace, "'}' closing the enumeration");
        break;
      }
      return Domain::enumeration(std::move(values));
    }
    if (at_keyword("bool")) {
      next();
      return Domain::boolean();
    }
    if (at_keyword("int")) {
      next();
      expect(Tok::LBracket, "'['");
      auto lo = int_literal();
      expect(Tok::DotDot, "'..'");
      auto hi = int_literal();
      expect(Tok::RBracket, "']'");
      if (lo > hi) fail(prev(), "empty integer range");
      return Domain::integer(lo, hi);
    }
    fail(peek(), "expected a domain ({...}, bool, int[lo..hi]), found " + describe(peek()));
  }

  // -- statements ----------------------------------------------------------
  void top_statement() {
    if (at_keyword("navigator")) {
      Token kw = next();
      Token name = expect(Tok::Ident, "thing name");
      if (model_.navigator) fail(kw, "navigator declared twice");
      model_.navigator = name.text;
      end_statement();
    } else if (at_keyword("thing")) {
      thing_decl();
    } else if (at_keyword("machine")) {
      machine_decl(std::nullopt);
    } else if (at_keyword("flow") || at_keyword("trigger")) {
      edge_decl();
    } else if (at_keyword("event")) {
      event_decl();
    } else if (at_keyword("behavior")) {
      behavior_decl();
    } else if (at(Tok::RBrace)) {
      Token t = next();
      fail(t, "unmatched '}'");
    } else {
      fail(peek(), "expected a declaration, found " + describe(peek()));
    }
  }

  void thing_decl() {
    Token kw = next();
    Token name = expect(Tok::Ident, "thing name");
    ThingKind t;
    t.id = name.text;
    expect(Tok::LBrace, "'{'");
    while (!at(Tok::RBrace)) {
      Token fname = expect(Tok::Ident, "payload field name");
      expect(Tok::Colon, "':'");
      PayloadField f{fname.text, domain(), std::nullopt};
      if (at(Tok::Eq)) {
        next();
        f.fallback = literal();
      }
      t.fields.push_back(std::move(f));
      if (at(Tok::Comma) || at(Tok::Semi)) next();
      else if (!at(Tok::RBrace)) fail(peek(), "expected ',' or '}', found " + describe(peek()));
    }
    Token close = next();
    if (at(Tok::Semi)) next();
    if (model_.thing(t.id)) fail(name, "thing '" + t.id + "' declared twice");
    model_.spans[t.id] = span_between(kw, close);
    model_.declaration_order.push_back({Decl::Kind::Thing, t.id});
    model_.things.push_back(std::move(t));
  }

  void machine_decl(const std::optional<std::string>& parent) {
    Token kw = next();
    Token name = expect(Tok::Ident, "machine name");
    if (parse_stage(name.text) || name.text == kThingSubject)
      fail(name, "'" + name.text + "' is reserved and cannot name a machine");
    Machine m;
    m.name = name.text;
    m.parent = parent;
    m.id = parent ? *parent + "." + name.text : name.text;
    if (at_keyword("at")) {
      next();
      m.placement = stage_keyword_token();
    }
    if (model_.machine(m.id)) fail(name, "sibling machines share the name '" + name.text + "'");
    expect(Tok::LBrace, "'{'");
    const std::string id = m.id;
    model_.spans[id] = span_between(kw, name);
    model_.declaration_order.push_back({Decl::Kind::Machine, id});
    model_.machines.push_back(std::move(m));

    while (!at(Tok::RBrace)) {
      if (at(Tok::End)) fail(peek(), "expected '}' closing machine " + id);
      std::size_t before = pos_;
      try {
        machine_statement(id);
      } catch (const ParseFail& f) {
        diags_.push_back(f.diag);
        sync(before);
      }
    }
    next();
    if (at(Tok::Semi)) next();
  }

  void machine_statement(const std::string& id) {
    if (at_keyword("machine")) {
      machine_decl(id);
      return;
    }
    if (at_keyword("stages")) {
      next();
      while (true) {
        Token t = peek();
        StageKind k = stage_keyword_token();
        Machine* m = model_.machine(id);
        if (m->has_stage(k)) fail(t, "stage " + std::string(stage_name(k)) + " declared twice");
        m->stages.push_back(k);
        if (!at(Tok::Comma)) break;
        next();
      }
      end_statement();
      return;
    }
    if (at_keyword("attr") || at_keyword("process")) {
      bool is_process = lower(next().text) == "process";
      Token name = expect(Tok::Ident, "attribute name");
      expect(Tok::Colon, "':'");
      Attribute a;
      a.name = name.text;
      a.domain = domain();
      a.is_process = is_process;
      expect(Tok::Eq, "'=' and an initial value");
      a.initial = literal();
      end_statement();
      Machine* m = model_.machine(id);
      if (m->attribute(a.name)) fail(name, "attribute '" + a.name + "' declared twice");
      model_.spans[id + "." + a.name] = span_between(name, prev());
      m->attributes.push_back(std::move(a));
      return;
    }
    if (at_keyword("resident")) {
      next();
      Token thing = expect(Tok::Ident, "thing name");
      expect_keyword("at");
      StageKind k = stage_keyword_token();
      end_statement();
      model_.machine(id)->residents.push_back({thing.text, k});
      return;
    }
    fail(peek(), "expected a machine statement (stages, attr, process, resident, machine), found " +
                     describe(peek()));
  }

  void edge_decl() {
    Token kw = next();
    RawEdge e;
    e.kind = lower(kw.text) == "flow" ? EdgeKind::Flow : EdgeKind::Trigger;
    if (at(Tok::Ident) && peek(1).kind == Tok::Colon) {
      e.name = next().text;
      next();
    }
    e.src = path();
    if (e.kind == EdgeKind::Flow) expect(Tok::Arrow, "'->'");
    else expect(Tok::Squiggle, "'~>'");
    e.dst = path();
    while (at(Tok::LBracket) || at_keyword("carries")) {
      if (at(Tok::LBracket)) {
        if (e.guard) fail(peek(), "edge has more than one guard");
        next();
        Guard g;
        g.subject = path().text;
        if (at(Tok::Eq)) g.op = Guard::Op::Eq;
        else if (at(Tok::Ne)) g.op = Guard::Op::Ne;
        else fail(peek(), "expected '=' or '!=' in guard, found " + describe(peek()));
        next();
        g.literal = literal();
        expect(Tok::RBracket, "']'");
        e.guard = std::move(g);
      } else {
        next();
        if (e.carries) fail(prev(), "edge carries more than one thing");
        e.carries = expect(Tok::Ident, "thing name").text;
      }
    }
    Token last = prev();
    if (!at(Tok::Semi)) fail(peek(), "expected ';', found " + describe(peek()));
    next();
    e.span = span_between(kw, last);
    e.decl_index = model_.declaration_order.size();
    model_.declaration_order.push_back({Decl::Kind::Edge, {}});
    raw_edges_.push_back(std::move(e));
  }

  RawElem element() {
    RawElem el;
    el.first = path();
    if (at(Tok::Arrow) || at(Tok::Squiggle)) {
      el.arrow = next().kind == Tok::Arrow ? EdgeKind::Flow : EdgeKind::Trigger;
      el.second = path();
    }
    return el;
  }

  void event_decl() {
    Token kw = next();
    RawEvent ev;
    Token name = expect(Tok::Ident, "event name");
    ev.id = name.text;
    if (at(Tok::String)) ev.label = next().text;
    expect_keyword("region");
    expect(Tok::LBrace, "'{'");
    while (!at(Tok::RBrace)) {
      ev.elements.push_back(element());
      if (at(Tok::Comma)) next();
      else if (!at(Tok::RBrace)) fail(peek(), "expected ',' or '}', found " + describe(peek()));
    }
    next();
    expect_keyword("anchor");
    ev.anchor = element();
    Token last = prev();
    if (!at(Tok::Semi)) fail(peek(), "expected ';', found " + describe(peek()));
    next();
    for (const auto& other : raw_events_)
      if (other.id == ev.id) fail(name, "event '" + ev.id + "' declared twice");
    ev.span = span_between(kw, last);
    model_.spans[ev.id] = ev.span;
    model_.declaration_order.push_back({Decl::Kind::Event, ev.id});
    raw_events_.push_back(std::move(ev));
  }

  void behavior_decl() {
    Token kw = next();
    if (model_.behavior) fail(kw, "behavior declared twice");
    BehaviorGraph g;
    expect(Tok::LBrace, "'{'");
    while (!at(Tok::RBrace)) {
      BehaviorArc a;
      a.from = expect(Tok::Ident, "event name").text;
      expect(Tok::Arrow, "'->'");
      a.to = expect(Tok::Ident, "event name").text;
      if (at_keyword("loop")) {
        next();
        a.loop = true;
      }
      end_statement();
      g.arcs.push_back(std::move(a));
    }
    Token close = next();
    if (at(Tok::Semi)) next();
    model_.behavior = std::move(g);
    model_.spans["behavior"] = span_between(kw, close);
    model_.declaration_order.push_back({Decl::Kind::Behavior, "behavior"});
  }

  // -- resolution ----------------------------------------------------------
  void resolve_error(const Error& err, const SourceSpan& span) {
    diags_.push_back({Severity::Error, err.code(), err.what(), span, std::nullopt});
  }

  std::optional<StageRef> resolve_stage(const RawPath& p) {
    try {
      ElementRef ref = resolve_path(model_, p.text);
      if (ref.kind != ElementRef::Kind::Stage) {
        diags_.push_back({Severity::Error, code::kNoPath, "'" + p.text + "' does not name a stage", p.span,
                          std::nullopt});
        return std::nullopt;
      }
      return ref.stage_ref();
    } catch (const Error& err) {
      resolve_error(err, p.span);
      return std::nullopt;
    }
  }

  std::optional<ElementRef> resolve_element(const RawElem& el) {
    if (!el.arrow) {
      if (el.first.text.find('.') == std::string::npos && model_.edge(el.first.text))
        return ElementRef::of_edge(el.first.text);
      auto s = resolve_stage(el.first);
      if (!s) return std::nullopt;
      return ElementRef::of_stage(*s);
    }
    auto a = resolve_stage(el.first);
    auto b = resolve_stage(el.second);
    if (!a || !b) return std::nullopt;
    std::vector<const Edge*> hits;
    for (const auto& e : model_.edges)
      if (e.kind == *el.arrow && e.source == *a && e.target == *b) hits.push_back(&e);
    SourceSpan span = el.first.span;
    span.end_line = el.second.span.end_line;
    span.end_col = el.second.span.end_col;
    if (hits.empty()) {
      diags_.push_back({Severity::Error, code::kNoPath, "no edge " + el.first.text + " to " + el.second.text, span,
                        std::nullopt});
      return std::nullopt;
    }
    if (hits.size() > 1) {
      diags_.push_back({Severity::Error, code::kAmbiguous,
                        "several edges connect " + el.first.text + " to " + el.second.text + "; refer to one by name",
                        span, std::nullopt});
      return std::nullopt;
    }
    return ElementRef::of_edge(hits.front()->id);
  }

  void resolve() {
    std::map<std::string, int> derived_count;
    for (auto& raw : raw_edges_) {
      auto src = resolve_stage(raw.src);
      auto dst = resolve_stage(raw.dst);
      if (!src || !dst) continue;
      Edge e;
      e.source = *src;
      e.target = *dst;
      e.kind = raw.kind;
      e.carries = raw.carries;
      e.guard = raw.guard;
      if (raw.name) {
        e.id = *raw.name;
        e.named = true;
        if (model_.edge(e.id)) {
          diags_.push_back({Severity::Error, code::kDuplicate, "edge '" + e.id + "' declared twice", raw.span,
                            std::nullopt});
          continue;
        }
      } else {
        e.id = derived_edge_id(e.source, e.target, e.kind);
        int n = ++derived_count[e.id];
        if (n > 1) e.id += "#" + std::to_string(n);
      }
      model_.spans[e.id] = raw.span;
      model_.declaration_order[raw.decl_index].id = e.id;
      model_.edges.push_back(std::move(e));
    }
    for (const auto& raw : raw_events_) {
      Event ev;
      ev.id = raw.id;
      ev.label = raw.label;
      for (const auto& el : raw.elements)
        if (auto r = resolve_element(el)) ev.elements.push_back(*r);
      if (auto a = resolve_element(raw.anchor)) ev.anchor = *a;
      model_.events.push_back(std::move(ev));
    }
  }

  ParseResult finish() {
    ParseResult r;
    r.diagnostics = std::move(diags_);
    if (r.diagnostics.empty()) r.model = std::move(model_);
    return r;
  }

  std::vector<Token> toks_;
  std::string file_;
  std::size_t pos_ = 0;
  Model model_;
  std::vector<RawEdge> raw_edges_;
  std::vector<RawEvent> raw_events_;
  std::vector<Diagnostic> diags_;
};

// ---------------------------------------------------------------------------
// Serializer

bool is_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s[0])) return false;
  return std::all_of(s.begin(), s.end(), is_ident_char);
}

std::string quoted(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

std::string literal_text(const Value& v, bool bare_strings) {
  if (const auto* s = std::get_if<std::string>(&v)) {
    if (bare_strings && is_identifier(*s) && *s != "true" && *s != "false") return *s;
    return quoted(*s);
  }
  return value_to_string(v);
}

std::string domain_text(const Domain& d) {
  switch (d.type) {
    case Domain::Type::Bool: return "bool";
    case Domain::Type::Int: return "int[" + std::to_string(d.min) + ".." + std::to_string(d.max) + "]";
    case Domain::Type::Enum: {
      std::string out = "{";
      for (std::size_t i = 0; i < d.values.size(); ++i) {
        if (i) out += ", ";
        out += literal_text(Value{d.values[i]}, true);
      }
      return out + "}";
    }
  }
  return "bool";
}

std::string stage_path(const Model& m, const StageRef& s) {
  std::string p = display_path(m, s);
  auto dot = p.rfind('.');
  return p.substr(0, dot + 1) + std::string(stage_keyword(s.kind));
}

std::string element_text(const Model& m, const ElementRef& el) {
  if (el.kind == ElementRef::Kind::Stage) return stage_path(m, el.stage_ref());
  if (el.kind == ElementRef::Kind::Edge) {
    const Edge* e = m.edge(el.name);
    if (e && !e->named)
      return stage_path(m, e->source) + (e->kind == EdgeKind::Flow ? " -> " : " ~> ") + stage_path(m, e->target);
    return el.name;
  }
  return el.id();
}

class Serializer {
 public:
  explicit Serializer(const Model& m) : m_(m) {
    for (std::size_t i = 0; i < m.declaration_order.size(); ++i) order_[m.declaration_order[i]] = i;
  }

  std::string run() {
    out_ << "model " << m_.name << '\n';
    if (m_.navigator) out_ << "navigator " << *m_.navigator << ";\n";
    std::optional<Decl::Kind> last;
    for (const Decl& d : m_.declaration_order) {
      if (d.kind == Decl::Kind::Machine) {
        const Machine* mm = m_.machine(d.id);
        if (!mm || mm->parent) continue;
      }
      if (!last || *last != d.kind || d.kind == Decl::Kind::Machine) out_ << '\n';
      last = d.kind;
      switch (d.kind) {
        case Decl::Kind::Thing: thing(*m_.thing(d.id)); break;
        case Decl::Kind::Machine: machine(*m_.machine(d.id), 0); break;
        case Decl::Kind::Edge: edge(*m_.edge(d.id)); break;
        case Decl::Kind::Event: event(*m_.event(d.id)); break;
        case Decl::Kind::Behavior: behavior(); break;
      }
    }
    return out_.str();
  }

 private:
  static std::string indent(int depth) { return std::string(static_cast<std::size_t>(depth) * 2, ' '); }

  void thing(const ThingKind& t) {
    out_ << "thing " << t.id << " {";
    for (std::size_t i = 0; i < t.fields.size(); ++i) {
      const auto& f = t.fields[i];
      out_ << (i ? ", " : " ") << f.name << ": " << domain_text(f.domain);
      if (f.fallback) out_ << " = " << literal_text(*f.fallback, f.domain.type == Domain::Type::Enum);
    }
    out_ << (t.fields.empty() ? "}" : " }") << '\n';
  }

  void machine(const Machine& mm, int depth) {
    std::vector<const Machine*> kids = m_.children(mm.id);
    std::stable_sort(kids.begin(), kids.end(), [&](const Machine* a, const Machine* b) {
      return rank({Decl::Kind::Machine, a->id}) < rank({Decl::Kind::Machine, b->id});
    });
    out_ << indent(depth) << "machine " << mm.name;
    if (mm.placement) out_ << " at " << stage_keyword(*mm.placement);
    if (mm.stages.empty() && mm.attributes.empty() && mm.residents.empty() && kids.empty()) {
      out_ << " {}\n";
      return;
    }
    out_ << " {\n";
    if (!mm.stages.empty()) {
      out_ << indent(depth + 1) << "stages ";
      for (std::size_t i = 0; i < mm.stages.size(); ++i) out_ << (i ? ", " : "") << stage_keyword(mm.stages[i]);
      out_ << ";\n";
    }
    for (const auto& a : mm.attributes) {
      out_ << indent(depth + 1) << (a.is_process ? "process " : "attr ") << a.name << ": " << domain_text(a.domain)
           << " = " << literal_text(a.initial, a.domain.type == Domain::Type::Enum) << ";\n";
    }
    for (const auto& r : mm.residents)
      out_ << indent(depth + 1) << "resident " << r.thing << " at " << stage_keyword(r.stage) << ";\n";
    for (const Machine* k : kids) machine(*k, depth + 1);
    out_ << indent(depth) << "}\n";
  }

  void edge(const Edge& e) {
    out_ << (e.kind == EdgeKind::Flow ? "flow " : "trigger ");
    if (e.named) out_ << e.id << ": ";
    out_ << stage_path(m_, e.source) << (e.kind == EdgeKind::Flow ? " -> " : " ~> ") << stage_path(m_, e.target);
    if (e.guard) {
      out_ << " [" << e.guard->subject << (e.guard->op == Guard::Op::Eq ? " = " : " != ")
           << literal_text(e.guard->literal, false) << ']';
    }
    if (e.carries) out_ << " carries " << *e.carries;
    out_ << ";\n";
  }

  void event(const Event& ev) {
    out_ << "event " << ev.id << ' ' << quoted(ev.label) << " region {";
    for (std::size_t i = 0; i < ev.elements.size(); ++i)
      out_ << (i ? ", " : " ") << element_text(m_, ev.elements[i]);
    out_ << (ev.elements.empty() ? "}" : " }") << " anchor " << element_text(m_, ev.anchor) << ";\n";
  }

  void behavior() {
    if (m_.behavior->arcs.empty()) {
      out_ << "behavior {}\n";
      return;
    }
    out_ << "behavior {\n";
    for (const auto& a : m_.behavior->arcs)
      out_ << indent(1) << a.from << " -> " << a.to << (a.loop ? " loop" : "") << ";\n";
    out_ << "}\n";
  }

  std::size_t rank(const Decl& d) const {
    auto it = order_.find(d);
    return it == order_.end() ? order_.size() : it->second;
  }

  struct DeclLess {
    bool operator()(const Decl& a, const Decl& b) const {
      return std::tie(a.kind, a.id) < std::tie(b.kind, b.id);
    }
  };

  const Model& m_;
  std::map<Decl, std::size_t, DeclLess> order_;
  std::ostringstream out_;
};

}  // namespace

std::string quote_if_needed(std::string_view name) {
  return is_identifier(name) ? std::string(name) : quoted(name);
}

ParseResult parse(std::string_view text, std::string file) {
  std::string src = normalize_newlines(text);
  Parser p(Lexer(src).run(), std::move(file));
  return p.run();
}

std::string serialize(const Model& model) { return Serializer(model).run(); }

ParseResult parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(code::kParse, "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

}  // namespace tmkit
