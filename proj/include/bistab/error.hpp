#pragma once

#include <stdexcept>
#include <string>

namespace bistab {

enum class ErrorCode {
  invalid_argument,
  invalid_dimension,
  capacity,
  index_out_of_range,
  unsupported,
  dimension_mismatch,
  incomplete_metadata,
  ambiguous_branch,
  integration_instability,
  step_size,
  singular_response,
  no_bracket,
  non_convergence,
};

// Input errors map to CLI exit code 2, numerical failures to exit code 3.
inline bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::integration_instability:
    case ErrorCode::step_size:
    case ErrorCode::singular_response:
    case ErrorCode::no_bracket:
    case ErrorCode::non_convergence:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bistab
