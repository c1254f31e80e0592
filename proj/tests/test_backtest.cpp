#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qdiv/backtest.hpp"

using namespace qdiv;

namespace {

ReturnsPanel constant_panel(int months, double a, double b) {
    ReturnsPanel p;
    p.returns.resize(months, 2);
    p.returns.col(0).setConstant(a);
    p.returns.col(1).setConstant(b);
    p.market = VectorXd::LinSpaced(months, -0.02, 0.03);
    p.caps = MatrixXd::Ones(months, 2);
    p.asset_ids = {"A", "B"};
    for (int t = 0; t < months; ++t) p.dates.push_back(YearMonth{2001, 1}.plus_months(t));
    return p;
}

void expect_identical(const BacktestResult& a, const BacktestResult& b) {
    ASSERT_EQ(a.oos_dates, b.oos_dates);
    ASSERT_EQ(a.oos_returns.size(), b.oos_returns.size());
    for (std::size_t k = 0; k < a.oos_returns.size(); ++k) {
        EXPECT_EQ(a.oos_returns[k], b.oos_returns[k]);
        EXPECT_EQ(a.holdings_history[k].weights, b.holdings_history[k].weights);
    }
    ASSERT_EQ(a.failures.size(), b.failures.size());
    for (std::size_t k = 0; k < a.failures.size(); ++k) {
        EXPECT_EQ(a.failures[k].month, b.failures[k].month);
        EXPECT_EQ(a.failures[k].code, b.failures[k].code);
    }
}

}  // namespace

TEST(BacktestConfig, Validate) {
    BacktestConfig cfg;
    cfg.validate();
    cfg.window = 11;
    EXPECT_QDIV_ERROR(cfg.validate(), ErrorCode::invalid_config);
    cfg.window = 60;
    cfg.skip = 2;
    EXPECT_QDIV_ERROR(cfg.validate(), ErrorCode::invalid_config);
}

TEST(RebalanceSchedule, SingleMonth) {
    oracle::Rng rng(1);
    const ReturnsPanel p = oracle::random_panel(rng, 62, 3);
    BacktestConfig cfg;
    EXPECT_EQ(rebalance_schedule(p, cfg), (std::vector<Index>{61}));
    cfg.skip = 0;
    EXPECT_EQ(rebalance_schedule(p, cfg), (std::vector<Index>{60, 61}));
}

TEST(RebalanceSchedule, Clamps) {
    oracle::Rng rng(2);
    const ReturnsPanel p = oracle::random_panel(rng, 100, 3);
    BacktestConfig cfg;
    cfg.start = p.dates[70];
    cfg.end = p.dates[80];
    const auto s = rebalance_schedule(p, cfg);
    EXPECT_EQ(s.front(), 70);
    EXPECT_EQ(s.back(), 80);
    cfg.start.reset();
    cfg.end = p.dates[50];
    EXPECT_QDIV_ERROR(rebalance_schedule(p, cfg), ErrorCode::short_panel);
}

TEST(RunBacktest, OneOosMonth) {
    oracle::Rng rng(3);
    const ReturnsPanel p = oracle::random_panel(rng, 62, 4);
    const BacktestResult r = run_backtest(p, BacktestConfig{});
    ASSERT_EQ(r.oos_returns.size(), 1u);
    EXPECT_EQ(r.oos_dates[0], p.dates[61]);
    EXPECT_EQ(r.rebalance_count(), 1u);
}

TEST(RunBacktest, ShortPanel) {
    oracle::Rng rng(4);
    const ReturnsPanel p = oracle::random_panel(rng, 61, 4);
    EXPECT_QDIV_ERROR(run_backtest(p, BacktestConfig{}), ErrorCode::short_panel);
}

TEST(RunBacktest, EqualWeightedConstantReturns) {
    const ReturnsPanel p = constant_panel(80, 0.01, 0.03);
    BacktestConfig cfg;
    cfg.strategy = StrategyKind::equal_weighted;
    const BacktestResult r = run_backtest(p, cfg);
    ASSERT_EQ(r.oos_returns.size(), 19u);
    for (double v : r.oos_returns) EXPECT_NEAR(v, 0.02, 1e-17);
}

TEST(RunBacktest, MatchesReplayOracle) {
    oracle::Rng rng(5);
    const ReturnsPanel p = oracle::random_panel(rng, 300, 20);
    const BacktestResult r = run_backtest(p, BacktestConfig{});
    const auto replay = oracle::replay_single_factor_min_variance(p, 60, 1);
    ASSERT_EQ(r.oos_returns.size(), replay.size());
    ASSERT_TRUE(r.failures.empty());
    for (std::size_t k = 0; k < replay.size(); ++k) {
        EXPECT_EQ(r.oos_dates[k], p.dates[static_cast<std::size_t>(replay[k].first)]);
        EXPECT_NEAR(r.oos_returns[k], replay[k].second, 1e-10);
    }
}

TEST(RunBacktest, ValueWeightedUsesLastWindowCaps) {
    oracle::Rng rng(6);
    const ReturnsPanel p = oracle::random_panel(rng, 64, 3);
    BacktestConfig cfg;
    cfg.strategy = StrategyKind::value_weighted;
    const BacktestResult r = run_backtest(p, cfg);
    ASSERT_EQ(r.holdings_history.size(), 3u);
    const VectorXd caps = p.caps.row(60).transpose();
    const VectorXd expected = caps / caps.sum();
    EXPECT_LT((r.holdings_history[1].weights - expected).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(RunBacktest, IncompleteAssetHoldsNothing) {
    oracle::Rng rng(7);
    ReturnsPanel p = oracle::random_panel(rng, 70, 5);
    p.returns(30, 2) = std::nan("");
    BacktestConfig cfg;
    cfg.strategy = StrategyKind::equal_weighted;
    const BacktestResult r = run_backtest(p, cfg);
    for (const auto& h : r.holdings_history) {
        EXPECT_EQ(h.weights(2), 0.0);
        EXPECT_NEAR(h.weights.sum(), 1.0, 1e-15);
    }
}

TEST(RunBacktest, NoLookAhead) {
    oracle::Rng rng(8);
    const ReturnsPanel p = oracle::random_panel(rng, 120, 8);
    for (int trial = 0; trial < 10; ++trial) {
        const Index t = rng.integer(61, 119);
        BacktestConfig cfg;
        cfg.risk_model = static_cast<RiskModelKind>(rng.integer(0, 2));
        cfg.strategy = static_cast<StrategyKind>(rng.integer(0, 4));
        cfg.skip = rng.integer(0, 1);
        const Holdings base = construct_holdings(p, t, cfg);
        ReturnsPanel q = p;
        for (Index row = t; row < q.months(); ++row) {
            q.returns.row(row).array() *= rng.uniform(-3.0, 3.0);
            q.returns.row(row) = q.returns.row(row).cwiseMax(-0.95);
            q.market(row) = rng.normal(0.0, 0.1);
            q.caps.row(row).array() *= rng.uniform(0.1, 10.0);
        }
        const Holdings moved = construct_holdings(q, t, cfg);
        EXPECT_EQ(base.weights, moved.weights);
    }
}

TEST(RunBacktest, SerialAndParallelAgree) {
    oracle::Rng rng(9);
    const ReturnsPanel p = oracle::random_panel(rng, 110, 12);
    for (auto strategy : {StrategyKind::min_variance, StrategyKind::risk_parity}) {
        BacktestConfig cfg;
        cfg.strategy = strategy;
        cfg.risk_model = RiskModelKind::sample_shrunk;
        const auto serial = run_backtest(p, cfg, {ExecutionMode::serial});
        const auto parallel = run_backtest(p, cfg, {ExecutionMode::parallel, 3});
        expect_identical(serial, parallel);
    }
}

TEST(RunMatrix, ElevenEntriesOnOneSchedule) {
    oracle::Rng rng(10);
    const ReturnsPanel p = oracle::random_panel(rng, 75, 6);
    const auto results = run_matrix(p, BacktestConfig{});
    ASSERT_EQ(results.size(), 11u);
    const auto keys = matrix_keys();
    ASSERT_EQ(keys.size(), 11u);
    std::set<std::string> names;
    for (const auto& k : keys) {
        ASSERT_TRUE(results.count(k));
        names.insert(k.str());
        const auto& r = results.at(k);
        EXPECT_EQ(r.rebalance_count(), 14u);
        EXPECT_EQ(r.oos_dates, results.at(keys[0]).oos_dates);
    }
    EXPECT_EQ(names.size(), 11u);
    EXPECT_TRUE(names.count("sample_shrunk__risk_parity"));
    EXPECT_TRUE(names.count("equal_weighted"));
}

TEST(RunMatrix, MatchesSingleRuns) {
    oracle::Rng rng(11);
    const ReturnsPanel p = oracle::random_panel(rng, 72, 5);
    const auto results = run_matrix(p, BacktestConfig{});
    for (const auto& key : matrix_keys()) {
        BacktestConfig cfg;
        cfg.strategy = key.strategy;
        if (key.risk_model) cfg.risk_model = *key.risk_model;
        expect_identical(results.at(key), run_backtest(p, cfg));
    }
}

TEST(RunMatrix, ShortPanelBeforeWork) {
    oracle::Rng rng(12);
    const ReturnsPanel p = oracle::random_panel(rng, 50, 5);
    EXPECT_QDIV_ERROR(run_matrix(p, BacktestConfig{}), ErrorCode::short_panel);
}

TEST(RunMatrix, NpdMonthsFailOnlyRiskParity) {
    oracle::Rng rng(13);
    const ReturnsPanel p = oracle::random_panel(rng, 40, 20);
    BacktestConfig cfg;
    cfg.window = 12;
    cfg.risk_options.shrink_delta = 0.0;
    const auto results = run_matrix(p, cfg);
    const auto& rp = results.at(ComboKey{RiskModelKind::sample_shrunk, StrategyKind::risk_parity});
    ASSERT_FALSE(rp.failures.empty());
    EXPECT_EQ(rp.failures[0].code, ErrorCode::not_positive_definite);
    EXPECT_EQ(rp.rebalance_count(), 27u);
    for (const auto& [key, r] : results) {
        if (key.risk_model == RiskModelKind::sample_shrunk && key.strategy == StrategyKind::risk_parity) continue;
        EXPECT_TRUE(r.failures.empty()) << key.str();
        EXPECT_EQ(r.oos_returns.size(), 27u) << key.str();
    }
}

TEST(RunMatrix, Deterministic) {
    oracle::Rng rng(14);
    const ReturnsPanel p = oracle::random_panel(rng, 80, 7);
    const auto a = run_matrix(p, BacktestConfig{}, {ExecutionMode::serial});
    const auto b = run_matrix(p, BacktestConfig{}, {ExecutionMode::parallel, 4});
    for (const auto& key : matrix_keys()) expect_identical(a.at(key), b.at(key));
}

TEST(RealizedReturn, MissingHeldReturnCountsZero) {
    oracle::Rng rng(15);
    ReturnsPanel p = oracle::random_panel(rng, 62, 2);
    p.returns(61, 1) = std::nan("");
    VectorXd w(2);
    w << 0.5, 0.5;
    EXPECT_EQ(realized_return(w, p, 61), 0.5 * p.returns(61, 0));
}
