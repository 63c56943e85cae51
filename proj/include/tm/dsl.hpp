#pragma once

// Textual surface syntax for TM models (`.tm` files). The grammar lives in
// docs/grammar.ebnf.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tm/diagnostic.hpp"
#include "tm/model.hpp"

namespace tmkit {

struct ParseResult {
  std::optional<Model> model;  // set iff there are no error diagnostics
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return model.has_value(); }
};

/// Parses `.tm` source. CRLF and lone CR are normalized to LF first. Errors
/// carry spans; the parser resynchronizes at statement boundaries so one call
/// reports every syntax error it can.
ParseResult parse(std::string_view text, std::string file = {});

/// Canonical text: two-space indentation, one statement per line, top-level
/// elements in declaration_order, lowercase keywords.
std::string serialize(const Model& model);

/// Reads a file and parses it. Throws Error(E_PARSE) when unreadable.
ParseResult parse_file(const std::string& path);

std::string normalize_newlines(std::string_view text);

/// `name` as written in source: bare when it is an identifier, quoted otherwise.
std::string quote_if_needed(std::string_view name);

}  // namespace tmkit
