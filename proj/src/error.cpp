#include "qdiv/error.hpp"

namespace qdiv {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::malformed_file: return "MalformedFile";
        case ErrorCode::misaligned_dates: return "MisalignedDates";
        case ErrorCode::non_finite_value: return "NonFiniteValue";
        case ErrorCode::short_panel: return "ShortPanel";
        case ErrorCode::out_of_range: return "OutOfRange";
        case ErrorCode::empty_universe: return "EmptyUniverse";
        case ErrorCode::degenerate_market: return "DegenerateMarket";
        case ErrorCode::degenerate_asset: return "DegenerateAsset";
        case ErrorCode::non_positive_variance: return "NonPositiveVariance";
        case ErrorCode::correlation_out_of_psd_range: return "CorrelationOutOfPSDRange";
        case ErrorCode::not_psd: return "NotPSD";
        case ErrorCode::not_positive_definite: return "NotPositiveDefinite";
        case ErrorCode::infeasible: return "Infeasible";
        case ErrorCode::max_iterations: return "MaxIterations";
        case ErrorCode::infeasible_bounds: return "InfeasibleBounds";
        case ErrorCode::degenerate_vols: return "DegenerateVols";
        case ErrorCode::non_positive_cap: return "NonPositiveCap";
        case ErrorCode::empty_series: return "EmptySeries";
        case ErrorCode::empty_history: return "EmptyHistory";
        case ErrorCode::invalid_spec: return "InvalidSpec";
        case ErrorCode::invalid_config: return "InvalidConfig";
    }
    return "Unknown";
}

}  // namespace qdiv
