#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qdiv/backtest.hpp"

namespace qdiv {

/// Annualized return statistics: x12 for means, x sqrt(12) for the sample
/// standard deviation, geometric compounding for the compound rate.
struct AnnualizedStats {
    double avg_excess_return = 0;
    double stdev = 0;
    std::optional<double> sharpe;           // unset when stdev == 0
    std::optional<double> compound_return;  // unset when prod(1 + r) <= 0
};

struct Concentration {
    double avg_positions = 0;
    double effective_n = 0;  // mean of 1 / sum(x^2)
};

struct PerformanceReport {
    std::string label;
    double avg_excess_return = 0;
    double stdev = 0;
    std::optional<double> sharpe;
    std::optional<double> compound_return;
    double market_beta = 0;
    double avg_positions = 0;
    double effective_n = 0;
    std::size_t months = 0;
    std::vector<Failure> failures;
};

AnnualizedStats annualize(std::span<const double> monthly);

/// OLS slope (with intercept) of portfolio on market excess returns.
double market_beta(std::span<const double> portfolio, std::span<const double> market);

Concentration concentration(const std::vector<Holdings>& history, double threshold = kPositionThreshold);

/// Seven-metric summary of one backtest; failed months are excluded from the
/// return statistics and carried as metadata.
PerformanceReport build_report(const BacktestResult& result, const ReturnsPanel& panel,
                               double threshold = kPositionThreshold);

/// Display names in table order.
std::string column_title(const ComboKey& key);

/// One exhibit column; an unset report renders as "--".
struct ExhibitColumn {
    std::string title;
    std::optional<PerformanceReport> report;
};

/// Aligned-column text table, rows in the usual exhibit order.
std::string format_exhibit_text(const std::string& title, const std::vector<ExhibitColumn>& columns);

nlohmann::json report_to_json(const PerformanceReport& report);
nlohmann::json exhibit_to_json(const std::string& title, const std::vector<ExhibitColumn>& columns);

}  // namespace qdiv
