#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vlslice {

enum class ErrorCode {
  invalid_argument,
  not_found,
  conflict,
  format,
  duplicate_id,
  zero_norm,
  dimension_mismatch,
  unavailable,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::format: return "format";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::zero_norm: return "zero_norm";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::unavailable: return "unavailable";
  }
  return "unknown";
}

// All library failures are reported through this type. `subject` carries the
// offending identifier (image id, slice id, attribute name) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string subject = {})
      : std::runtime_error(message), code_(code), subject_(std::move(subject)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorCode code_;
  std::string subject_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::string subject = {}) {
  throw Error(code, message, std::move(subject));
}

}  // namespace vlslice
