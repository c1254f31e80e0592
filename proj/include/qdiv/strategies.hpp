#pragma once

#include <optional>
#include <string_view>

#include "qdiv/panel.hpp"
#include "qdiv/riskmodels.hpp"
#include "qdiv/solver.hpp"

namespace qdiv {

enum class StrategyKind { min_variance, max_diversification, risk_parity, equal_weighted, value_weighted };

std::string_view to_string(StrategyKind kind) noexcept;
StrategyKind parse_strategy(std::string_view text);

/// Benchmarks need no covariance estimate.
constexpr bool is_benchmark(StrategyKind kind) noexcept {
    return kind == StrategyKind::equal_weighted || kind == StrategyKind::value_weighted;
}

inline constexpr double kPositionThreshold = 1e-6;

/// Long-only, fully-invested weights for one rebalance.
struct Holdings {
    VectorXd weights;
    StrategyKind strategy = StrategyKind::equal_weighted;
    YearMonth rebalance_date;
};

struct StrategyConfig {
    /// Uniform per-asset cap u; unset means no cap.
    std::optional<double> upper_bound;
    /// Per-asset caps; takes precedence over `upper_bound` when non-empty.
    VectorXd upper_bounds;
    /// Box bound d on the risk-parity barrier variables.
    double rp_bound = 5.0;
    SolverOptions solver;

    /// Cap vector for n assets (+inf where uncapped). Throws on u <= 0 or
    /// caps that cannot sum to one.
    VectorXd resolve_upper(Index n) const;
};

Holdings min_variance(const CovarianceModel& model, const StrategyConfig& cfg = {});
Holdings max_diversification(const CovarianceModel& model, const StrategyConfig& cfg = {});

/// Mean variance. risk_parity solves the barrier program on V divided by
/// it, so the bound d does not depend on the units of V.
double risk_parity_scale(const MatrixXd& v);

Holdings risk_parity(const CovarianceModel& model, const StrategyConfig& cfg = {});
Holdings equal_weighted(Index n);
Holdings value_weighted(const VectorXd& caps);

/// (sigma' x) / sqrt(x' V x).
double diversification_ratio(const CovarianceModel& model, const VectorXd& x);

/// x_i (V x)_i.
VectorXd risk_contributions(const MatrixXd& v, const VectorXd& x);

/// Throws Error unless the weights sum to one within 1e-8, are >= -1e-10
/// and respect `upper` within 1e-8.
void check_holdings(const Holdings& h, const VectorXd& upper);

}  // namespace qdiv
