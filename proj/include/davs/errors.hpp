#pragma once

#include <stdexcept>
#include <string>

namespace davs {

// Error categories used across the library. The CLI maps these to exit
// codes: config errors -> 2, degenerate-input errors -> 3, the rest -> 1.
enum class Errc {
  invalid_input,
  chart_mismatch,
  degenerate_log,
  degenerate_path,
  undefined_direction,
  insufficient_points,
  non_hemispheric,
  degenerate_hull,
  numerical_failure,
  non_convergence,
  malformed_boundary,
  degenerate_frame,
  infeasible_config,
  invalid_transition,
  config_error,
  io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

inline bool is_degenerate_input(Errc code) {
  switch (code) {
    case Errc::insufficient_points:
    case Errc::non_hemispheric:
    case Errc::degenerate_hull:
    case Errc::degenerate_log:
    case Errc::degenerate_path:
    case Errc::undefined_direction:
    case Errc::malformed_boundary:
    case Errc::degenerate_frame:
      return true;
    default:
      return false;
  }
}

}  // namespace davs
