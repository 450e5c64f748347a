#pragma once

#include <stdexcept>
#include <string>

namespace vcsel {

enum class ErrorCode {
  invalid_parameters,
  schema,
  anisotropy_not_aligned,
  below_threshold,
  unstable_system,
  unstable_polarization,
  step_too_large,
  state_diverged,
  defective_matrix,
  series_too_short,
  fit_diverged,
  io,
};

const char* to_string(ErrorCode code);

// Process exit status for the CLI:
// 0 ok, 1 config/schema, 2 below threshold, 3 instability, 4 numerical, 5 I/O.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vcsel
