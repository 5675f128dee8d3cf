#include "oid/errors.hpp"

namespace oid {

const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::disconnected_graph: return "DisconnectedGraph";
    case ErrorCode::zero_impedance: return "ZeroImpedance";
    case ErrorCode::duplicate_edge: return "DuplicateEdge";
    case ErrorCode::index_out_of_range: return "IndexOutOfRange";
    case ErrorCode::non_psd_covariance: return "NonPsdCovariance";
    case ErrorCode::invalid_truncation: return "InvalidTruncation";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::beta_out_of_range: return "BetaOutOfRange";
    case ErrorCode::empty_samples: return "EmptySamples";
    case ErrorCode::infeasible_bounds: return "InfeasibleBounds";
    case ErrorCode::negative_available_power: return "NegativeAvailablePower";
    case ErrorCode::empty_scenario_set: return "EmptyScenarioSet";
    case ErrorCode::not_radial: return "NotRadial";
    case ErrorCode::cone_mismatch: return "ConeMismatch";
    case ErrorCode::diverged: return "Diverged";
    case ErrorCode::not_psd: return "NotPsd";
    case ErrorCode::solve_failed: return "SolveFailed";
    case ErrorCode::validation_failed: return "ValidationFailed";
    case ErrorCode::io_error: return "IoError";
    }
    return "UnknownError";
}

} // namespace oid
