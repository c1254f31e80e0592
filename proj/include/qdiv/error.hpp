#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qdiv {

/// Failure categories raised by the pipeline. Each maps to a stable tag
/// used in reports and failure lists.
enum class ErrorCode {
    malformed_file,
    misaligned_dates,
    non_finite_value,
    short_panel,
    out_of_range,
    empty_universe,
    degenerate_market,
    degenerate_asset,
    non_positive_variance,
    correlation_out_of_psd_range,
    not_psd,
    not_positive_definite,
    infeasible,
    max_iterations,
    infeasible_bounds,
    degenerate_vols,
    non_positive_cap,
    empty_series,
    empty_history,
    invalid_spec,
    invalid_config,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace qdiv
