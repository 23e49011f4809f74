#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace churn {

enum class ErrorKind {
  NotPresent,
  SchemaError,
  NoEdge,
  OutOfRange,
  DeadEnd,
  NumericError,
  VocabError,
  EmptyBatch,
  EmptyInput,
  DataError,
  UndefinedMetric,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries one of the kinds above so the
// CLI can map it onto a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace churn
