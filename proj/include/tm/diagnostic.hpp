#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmkit {

struct SourceSpan {
  std::string file;
  int start_line = 1;
  int start_col = 1;
  int end_line = 1;
  int end_col = 1;

  bool operator==(const SourceSpan&) const = default;
};

enum class Severity { Error, Warning };

// Diagnostic codes. The catalog is documented in docs/diagnostics.md.
namespace code {
inline constexpr const char* kParse = "E_PARSE";
inline constexpr const char* kAdjacency = "E_ADJ";
inline constexpr const char* kBoundary = "E_BOUNDARY";
inline constexpr const char* kNoPath = "E_NOPATH";
inline constexpr const char* kAmbiguous = "E_AMBIG";
inline constexpr const char* kGuardType = "E_GUARD_TYPE";
inline constexpr const char* kRegionEmpty = "E_REGION_EMPTY";
inline constexpr const char* kAnchor = "E_ANCHOR";
inline constexpr const char* kDuplicate = "E_DUP";
inline constexpr const char* kDomain = "E_DOMAIN";
inline constexpr const char* kCycle = "E_CYCLE";
inline constexpr const char* kTriggerSource = "W_TRIG_SRC";
inline constexpr const char* kUnreachable = "W_UNREACHABLE";
inline constexpr const char* kNoElement = "E_NOELEM";
inline constexpr const char* kModelMismatch = "E_MODEL_MISMATCH";
inline constexpr const char* kUnknownEvent = "E_UNKNOWN_EVENT";
inline constexpr const char* kInvalidModel = "E_INVALID_MODEL";
inline constexpr const char* kChoiceNeeded = "E_CHOICE_NEEDED";
inline constexpr const char* kNoResident = "E_NO_RESIDENT";
inline constexpr const char* kNotEnabled = "E_NOT_ENABLED";
inline constexpr const char* kScenario = "E_SCENARIO";
}  // namespace code

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string code;
  std::string message;
  std::optional<SourceSpan> span;
  std::optional<std::string> element;
};

std::string format_diagnostic(const Diagnostic& d);

/// Error raised by toolchain operations; `code` is one of the catalog codes.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace tmkit
