#include "feonet/error.hpp"

#include <iostream>
#include <mutex>

namespace feonet {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_resolution: return "invalid-resolution";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::index_out_of_range: return "index-out-of-range";
    case ErrorCode::inverted_element: return "inverted-element";
    case ErrorCode::dangling_boundary_node: return "dangling-boundary-node";
    case ErrorCode::assembly_failure: return "assembly-failure";
    case ErrorCode::solver_failure: return "solver-failure";
    case ErrorCode::undefined_reference: return "undefined-reference";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::stale_cache: return "stale-cache";
    case ErrorCode::empty_row: return "empty-row";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::factorization_failure: return "factorization-failure";
    case ErrorCode::not_expandable: return "not-expandable";
    case ErrorCode::realization_too_deep: return "realization-too-deep";
    case ErrorCode::tolerance_unreachable: return "tolerance-unreachable";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::family_mismatch: return "family-mismatch";
    case ErrorCode::checkpoint_mismatch: return "checkpoint-mismatch";
    case ErrorCode::unknown_key: return "unknown-key";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

namespace {
std::mutex g_warning_mutex;
WarningHandler g_warning_handler;
}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_warning_mutex);
  g_warning_handler = std::move(handler);
}

void warn(const std::string& message) {
  std::lock_guard lock(g_warning_mutex);
  if (g_warning_handler) {
    g_warning_handler(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace feonet
