#pragma once

#include <stdexcept>
#include <string>

namespace oid {

enum class ErrorCode {
    disconnected_graph,
    zero_impedance,
    duplicate_edge,
    index_out_of_range,
    non_psd_covariance,
    invalid_truncation,
    dimension_mismatch,
    beta_out_of_range,
    empty_samples,
    infeasible_bounds,
    negative_available_power,
    empty_scenario_set,
    not_radial,
    cone_mismatch,
    diverged,
    not_psd,
    solve_failed,
    validation_failed,
    io_error,
};

const char* to_string(ErrorCode code);

/// Library-wide exception carrying a machine-checkable code.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
    {
    }

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

} // namespace oid
