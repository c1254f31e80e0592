#include "qdiv/backtest.hpp"

#include <cmath>
#include <exception>
#include <optional>

#include <omp.h>

namespace qdiv {

namespace {

struct MonthOutcome {
    std::optional<Holdings> holdings;
    double realized = 0.0;
    std::optional<Failure> failure;
};

Failure make_failure(const ReturnsPanel& panel, Index t, const Error& e) {
    return Failure{panel.dates[static_cast<std::size_t>(t)], e.code(), e.what()};
}

VectorXd expand(const VectorXd& weights, const std::vector<Index>& universe, Index n) {
    VectorXd full = VectorXd::Zero(n);
    for (std::size_t k = 0; k < universe.size(); ++k) full(universe[k]) = weights(static_cast<Index>(k));
    return full;
}

Holdings build_for_strategy(StrategyKind strategy, const CovarianceModel* model, const VectorXd& caps,
                            const BacktestConfig& cfg) {
    switch (strategy) {
        case StrategyKind::min_variance: return min_variance(*model, cfg.strategy_config);
        case StrategyKind::max_diversification: return max_diversification(*model, cfg.strategy_config);
        case StrategyKind::risk_parity: return risk_parity(*model, cfg.strategy_config);
        case StrategyKind::equal_weighted: return equal_weighted(caps.size());
        case StrategyKind::value_weighted: return value_weighted(caps);
    }
    throw Error(ErrorCode::invalid_config, "unknown strategy");
}

/// Everything one rebalance month produces for the requested combinations.
/// Reads only panel rows before t - skip for construction and row t for the
/// realized return.
std::vector<MonthOutcome> evaluate_month(const ReturnsPanel& panel, Index t, const BacktestConfig& cfg,
                                         const std::vector<ComboKey>& keys) {
    std::vector<MonthOutcome> out(keys.size());
    auto fail_all = [&](const Error& e) {
        for (auto& o : out) o.failure = make_failure(panel, t, e);
    };

    std::vector<Index> universe;
    EstimationWindow window;
    VectorXd caps;
    try {
        const EstimationWindow full = window_at(panel, t, cfg.window, cfg.skip);
        universe = active_universe(full);
        window = restrict_assets(full, universe);
        const Index cap_row = t - cfg.skip - 1;
        caps.resize(static_cast<Index>(universe.size()));
        for (std::size_t k = 0; k < universe.size(); ++k) caps(static_cast<Index>(k)) = panel.caps(cap_row, universe[k]);
    } catch (const Error& e) {
        fail_all(e);
        return out;
    }

    const Index n = panel.assets();
    const RiskModelKind kinds[] = {RiskModelKind::single_factor, RiskModelKind::constant_correlation,
                                   RiskModelKind::sample_shrunk};
    for (const RiskModelKind kind : kinds) {
        bool needed = false;
        for (const auto& key : keys) needed = needed || (key.risk_model == kind && !is_benchmark(key.strategy));
        if (!needed) continue;

        std::optional<CovarianceModel> model;
        std::optional<Error> model_error;
        try {
            model = estimate_covariance(window, kind, cfg.risk_options);
        } catch (const Error& e) {
            model_error = e;
        }
        for (std::size_t k = 0; k < keys.size(); ++k) {
            if (keys[k].risk_model != kind || is_benchmark(keys[k].strategy)) continue;
            if (model_error) {
                out[k].failure = make_failure(panel, t, *model_error);
                continue;
            }
            try {
                Holdings h = build_for_strategy(keys[k].strategy, &*model, caps, cfg);
                h.weights = expand(h.weights, universe, n);
                out[k].holdings = std::move(h);
            } catch (const Error& e) {
                out[k].failure = make_failure(panel, t, e);
            }
        }
    }

    for (std::size_t k = 0; k < keys.size(); ++k) {
        if (!is_benchmark(keys[k].strategy)) continue;
        try {
            Holdings h = build_for_strategy(keys[k].strategy, nullptr, caps, cfg);
            h.weights = expand(h.weights, universe, n);
            out[k].holdings = std::move(h);
        } catch (const Error& e) {
            out[k].failure = make_failure(panel, t, e);
        }
    }

    for (auto& o : out) {
        if (!o.holdings) continue;
        o.holdings->rebalance_date = panel.dates[static_cast<std::size_t>(t)];
        o.realized = realized_return(o.holdings->weights, panel, t);
    }
    return out;
}

/// Runs evaluate_month over the schedule and assembles results in month
/// order. The parallel path distributes months over OpenMP threads; every
/// month is computed by the same code, so both paths agree bit for bit.
std::vector<BacktestResult> run_schedule(const ReturnsPanel& panel, const BacktestConfig& cfg,
                                         const std::vector<ComboKey>& keys, const ExecutionOptions& exec) {
    const std::vector<Index> schedule = rebalance_schedule(panel, cfg);
    const auto months = static_cast<std::int64_t>(schedule.size());
    std::vector<std::vector<MonthOutcome>> slots(schedule.size());

    if (exec.mode == ExecutionMode::serial) {
        for (std::int64_t k = 0; k < months; ++k) {
            slots[static_cast<std::size_t>(k)] = evaluate_month(panel, schedule[static_cast<std::size_t>(k)], cfg, keys);
        }
    } else {
        std::exception_ptr error;
        const int threads = exec.threads > 0 ? exec.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
        for (std::int64_t k = 0; k < months; ++k) {
            try {
                slots[static_cast<std::size_t>(k)] =
                    evaluate_month(panel, schedule[static_cast<std::size_t>(k)], cfg, keys);
            } catch (...) {
#pragma omp critical(qdiv_backtest_error)
                if (!error) error = std::current_exception();
            }
        }
        if (error) std::rethrow_exception(error);
    }

    std::vector<BacktestResult> results(keys.size());
    for (std::size_t k = 0; k < keys.size(); ++k) {
        results[k].risk_model = keys[k].risk_model;
        results[k].strategy = keys[k].strategy;
    }
    for (std::size_t m = 0; m < schedule.size(); ++m) {
        for (std::size_t k = 0; k < keys.size(); ++k) {
            MonthOutcome& o = slots[m][k];
            if (o.failure) {
                results[k].failures.push_back(std::move(*o.failure));
            } else {
                results[k].oos_dates.push_back(o.holdings->rebalance_date);
                results[k].oos_returns.push_back(o.realized);
                results[k].holdings_history.push_back(std::move(*o.holdings));
            }
        }
    }
    return results;
}

}  // namespace

void BacktestConfig::validate() const {
    if (window < 12) throw Error(ErrorCode::invalid_config, "window must be at least 12 months");
    if (skip != 0 && skip != 1) throw Error(ErrorCode::invalid_config, "skip must be 0 or 1");
    if (!(strategy_config.rp_bound > 0.0)) throw Error(ErrorCode::invalid_config, "rp_bound must be positive");
    if (strategy_config.upper_bound && !(*strategy_config.upper_bound > 0.0)) {
        throw Error(ErrorCode::invalid_config, "upper bound must be positive");
    }
    if (risk_options.shrink_delta && !(*risk_options.shrink_delta >= 0.0 && *risk_options.shrink_delta <= 1.0)) {
        throw Error(ErrorCode::invalid_config, "shrink delta must lie in [0, 1]");
    }
}

std::string ComboKey::str() const {
    if (!risk_model) return std::string(to_string(strategy));
    return std::string(to_string(*risk_model)) + "__" + std::string(to_string(strategy));
}

std::vector<Index> rebalance_schedule(const ReturnsPanel& panel, const BacktestConfig& cfg) {
    cfg.validate();
    std::vector<Index> schedule;
    for (Index t = cfg.window + cfg.skip; t < panel.months(); ++t) {
        const YearMonth& date = panel.dates[static_cast<std::size_t>(t)];
        if (cfg.start && date < *cfg.start) continue;
        if (cfg.end && date > *cfg.end) continue;
        schedule.push_back(t);
    }
    if (schedule.empty()) {
        throw Error(ErrorCode::short_panel, "no out-of-sample month has " + std::to_string(cfg.window + cfg.skip) +
                                                " months of history inside the requested range");
    }
    return schedule;
}

double realized_return(const VectorXd& weights, const ReturnsPanel& panel, Index t) {
    double total = 0.0;
    for (Index j = 0; j < weights.size(); ++j) {
        const double r = panel.returns(t, j);
        if (weights(j) != 0.0 && !std::isnan(r)) total += weights(j) * r;
    }
    return total;
}

Holdings construct_holdings(const ReturnsPanel& panel, Index t, const BacktestConfig& cfg) {
    cfg.validate();
    const ComboKey key{is_benchmark(cfg.strategy) ? std::nullopt : std::optional(cfg.risk_model), cfg.strategy};
    auto outcome = evaluate_month(panel, t, cfg, {key});
    if (outcome[0].failure) throw Error(outcome[0].failure->code, outcome[0].failure->message);
    return std::move(*outcome[0].holdings);
}

BacktestResult run_backtest(const ReturnsPanel& panel, const BacktestConfig& cfg, const ExecutionOptions& exec) {
    const ComboKey key{is_benchmark(cfg.strategy) ? std::nullopt : std::optional(cfg.risk_model), cfg.strategy};
    return std::move(run_schedule(panel, cfg, {key}, exec).front());
}

std::vector<ComboKey> matrix_keys() {
    std::vector<ComboKey> keys{{std::nullopt, StrategyKind::value_weighted}, {std::nullopt, StrategyKind::equal_weighted}};
    for (const auto model : {RiskModelKind::single_factor, RiskModelKind::constant_correlation,
                             RiskModelKind::sample_shrunk}) {
        for (const auto strategy :
             {StrategyKind::min_variance, StrategyKind::max_diversification, StrategyKind::risk_parity}) {
            keys.push_back({model, strategy});
        }
    }
    return keys;
}

std::map<ComboKey, BacktestResult> run_matrix(const ReturnsPanel& panel, const BacktestConfig& base,
                                              const ExecutionOptions& exec) {
    const auto keys = matrix_keys();
    auto results = run_schedule(panel, base, keys, exec);
    std::map<ComboKey, BacktestResult> out;
    for (std::size_t k = 0; k < keys.size(); ++k) out.emplace(keys[k], std::move(results[k]));
    return out;
}

}  // namespace qdiv
