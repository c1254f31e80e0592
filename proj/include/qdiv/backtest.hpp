#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qdiv/error.hpp"
#include "qdiv/panel.hpp"
#include "qdiv/riskmodels.hpp"
#include "qdiv/strategies.hpp"

namespace qdiv {

struct BacktestConfig {
    int window = 60;
    int skip = 1;
    RiskModelKind risk_model = RiskModelKind::single_factor;
    StrategyKind strategy = StrategyKind::min_variance;
    StrategyConfig strategy_config;
    RiskModelOptions risk_options;
    std::optional<YearMonth> start;  // first OOS month considered
    std::optional<YearMonth> end;    // last OOS month considered

    void validate() const;
};

enum class ExecutionMode { serial, parallel };

struct ExecutionOptions {
    ExecutionMode mode = ExecutionMode::parallel;
    int threads = 0;  // 0: OpenMP default
};

struct Failure {
    YearMonth month;
    ErrorCode code;
    std::string message;
};

/// Out-of-sample record of one risk model x strategy combination. Holdings
/// weights span the full panel; assets outside a month's universe hold 0.
struct BacktestResult {
    std::optional<RiskModelKind> risk_model;  // unset for benchmarks
    StrategyKind strategy = StrategyKind::equal_weighted;
    std::vector<YearMonth> oos_dates;
    std::vector<double> oos_returns;
    std::vector<Holdings> holdings_history;
    std::vector<Failure> failures;

    std::size_t rebalance_count() const noexcept { return oos_returns.size() + failures.size(); }
};

struct ComboKey {
    std::optional<RiskModelKind> risk_model;
    StrategyKind strategy = StrategyKind::equal_weighted;

    std::string str() const;
    friend auto operator<=>(const ComboKey&, const ComboKey&) = default;
};

/// OOS month indices t such that the window [t - skip - W, t - skip) fits
/// and the month lies inside the config's clamps. Throws ShortPanel when empty.
std::vector<Index> rebalance_schedule(const ReturnsPanel& panel, const BacktestConfig& cfg);

/// Portfolio return x' r_t; missing returns of held assets count as zero.
double realized_return(const VectorXd& weights, const ReturnsPanel& panel, Index t);

/// Holdings for the OOS month at row t (full panel width).
Holdings construct_holdings(const ReturnsPanel& panel, Index t, const BacktestConfig& cfg);

BacktestResult run_backtest(const ReturnsPanel& panel, const BacktestConfig& cfg, const ExecutionOptions& exec = {});

/// All nine risk model x strategy combinations plus the two benchmarks on
/// one shared schedule. `base` supplies window, skip, clamps and options.
std::map<ComboKey, BacktestResult> run_matrix(const ReturnsPanel& panel, const BacktestConfig& base,
                                              const ExecutionOptions& exec = {});

/// The eleven keys run_matrix produces, in report order.
std::vector<ComboKey> matrix_keys();

}  // namespace qdiv
