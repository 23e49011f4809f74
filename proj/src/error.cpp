#include "churn/error.hpp"

namespace churn {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NotPresent: return "NotPresent";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::NoEdge: return "NoEdge";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::DeadEnd: return "DeadEnd";
    case ErrorKind::NumericError: return "NumericError";
    case ErrorKind::VocabError: return "VocabError";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DataError: return "DataError";
    case ErrorKind::UndefinedMetric: return "UndefinedMetric";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace churn
