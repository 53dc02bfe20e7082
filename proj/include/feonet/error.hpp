#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace feonet {

enum class ErrorCode {
  invalid_resolution,
  parse_error,
  index_out_of_range,
  inverted_element,
  dangling_boundary_node,
  assembly_failure,
  solver_failure,
  undefined_reference,
  dimension_mismatch,
  stale_cache,
  empty_row,
  infeasible,
  factorization_failure,
  not_expandable,
  realization_too_deep,
  tolerance_unreachable,
  precondition,
  family_mismatch,
  checkpoint_mismatch,
  unknown_key,
  non_finite,
  io,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Non-fatal diagnostics (e.g. a disconnected basis graph) go through here.
/// The default handler writes to stderr.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace feonet
