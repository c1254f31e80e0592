#include "qdiv/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdiv/error.hpp"
#include "qdiv/format.hpp"

namespace qdiv {

namespace {

constexpr double kMonthsPerYear = 12.0;

std::string percent(double v) { return format_fixed(100.0 * v, 1) + "%"; }

}  // namespace

AnnualizedStats annualize(std::span<const double> monthly) {
    if (monthly.empty()) throw Error(ErrorCode::empty_series, "no monthly returns to annualize");
    const auto n = static_cast<double>(monthly.size());

    double sum = 0.0;
    double log_growth = 0.0;
    bool growth_defined = true;
    for (const double r : monthly) {
        sum += r;
        if (1.0 + r > 0.0) {
            log_growth += std::log1p(r);
        } else {
            growth_defined = false;
        }
    }
    const double mean = sum / n;
    double ss = 0.0;
    const bool constant = std::all_of(monthly.begin(), monthly.end(), [&](double r) { return r == monthly[0]; });
    if (!constant)
        for (const double r : monthly) ss += (r - mean) * (r - mean);
    const double monthly_sd = monthly.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

    AnnualizedStats stats;
    stats.avg_excess_return = kMonthsPerYear * mean;
    stats.stdev = std::sqrt(kMonthsPerYear) * monthly_sd;
    if (stats.stdev > 0.0) stats.sharpe = stats.avg_excess_return / stats.stdev;
    if (growth_defined) stats.compound_return = std::expm1(log_growth * kMonthsPerYear / n);
    return stats;
}

double market_beta(std::span<const double> portfolio, std::span<const double> market) {
    if (portfolio.size() != market.size()) {
        throw Error(ErrorCode::misaligned_dates, "portfolio and market series differ in length");
    }
    if (portfolio.empty()) throw Error(ErrorCode::empty_series, "no returns for beta");
    const auto n = static_cast<double>(portfolio.size());
    double mp = 0.0;
    double mm = 0.0;
    for (std::size_t t = 0; t < portfolio.size(); ++t) {
        mp += portfolio[t];
        mm += market[t];
    }
    mp /= n;
    mm /= n;
    double cov = 0.0;
    double var = 0.0;
    for (std::size_t t = 0; t < portfolio.size(); ++t) {
        cov += (portfolio[t] - mp) * (market[t] - mm);
        var += (market[t] - mm) * (market[t] - mm);
    }
    const bool flat = std::all_of(market.begin(), market.end(), [&](double m) { return m == market[0]; });
    if (flat || !(var > 0.0)) throw Error(ErrorCode::degenerate_market, "market returns have zero variance");
    return cov / var;
}

Concentration concentration(const std::vector<Holdings>& history, double threshold) {
    if (history.empty()) throw Error(ErrorCode::empty_history, "no holdings to measure");
    Concentration c;
    for (const auto& h : history) {
        c.avg_positions += static_cast<double>((h.weights.array() > threshold).count());
        // Scale-free form of 1 / sum x^2; exact for equal weights.
        const VectorXd u = h.weights / h.weights.maxCoeff();
        c.effective_n += u.sum() * u.sum() / u.squaredNorm();
    }
    const auto months = static_cast<double>(history.size());
    c.avg_positions /= months;
    c.effective_n /= months;
    return c;
}

PerformanceReport build_report(const BacktestResult& result, const ReturnsPanel& panel, double threshold) {
    if (result.oos_returns.empty()) {
        throw Error(ErrorCode::empty_series, "every rebalance month failed for " +
                                                 ComboKey{result.risk_model, result.strategy}.str());
    }
    std::vector<double> market;
    market.reserve(result.oos_dates.size());
    const int first = panel.dates.front().ordinal();
    for (const auto& date : result.oos_dates) {
        const int row = date.ordinal() - first;
        if (row < 0 || row >= panel.months()) {
            throw Error(ErrorCode::misaligned_dates, "OOS month " + date.str() + " is outside the panel");
        }
        market.push_back(panel.market(row));
    }

    const AnnualizedStats stats = annualize(result.oos_returns);
    const Concentration conc = concentration(result.holdings_history, threshold);

    PerformanceReport report;
    report.label = column_title({result.risk_model, result.strategy});
    report.avg_excess_return = stats.avg_excess_return;
    report.stdev = stats.stdev;
    report.sharpe = stats.sharpe;
    report.compound_return = stats.compound_return;
    report.market_beta = market_beta(result.oos_returns, market);
    report.avg_positions = conc.avg_positions;
    report.effective_n = conc.effective_n;
    report.months = result.oos_returns.size();
    report.failures = result.failures;
    return report;
}

std::string column_title(const ComboKey& key) {
    switch (key.strategy) {
        case StrategyKind::value_weighted: return "Market (Value-Weighted)";
        case StrategyKind::equal_weighted: return "Equal Weighted";
        case StrategyKind::min_variance: return "Minimum Variance";
        case StrategyKind::max_diversification: return "Maximum Diversification";
        case StrategyKind::risk_parity: return "Risk Parity";
    }
    return "?";
}

std::string format_exhibit_text(const std::string& title, const std::vector<ExhibitColumn>& columns) {
    using Cell = std::optional<std::string>;
    struct Row {
        std::string label;
        std::vector<std::string> cells;
    };
    auto row = [&](std::string label, auto fn) {
        Row r{std::move(label), {}};
        for (const auto& col : columns) {
            const Cell c = col.report ? fn(*col.report) : Cell{};
            r.cells.push_back(c.value_or("--"));
        }
        return r;
    };
    const std::vector<Row> rows{
        row("Average Excess Return", [](const PerformanceReport& p) -> Cell { return percent(p.avg_excess_return); }),
        row("Standard Deviation", [](const PerformanceReport& p) -> Cell { return percent(p.stdev); }),
        row("Sharpe Ratio",
            [](const PerformanceReport& p) -> Cell {
                return p.sharpe ? Cell(format_fixed(*p.sharpe, 2)) : Cell{};
            }),
        row("Compound Return",
            [](const PerformanceReport& p) -> Cell {
                return p.compound_return ? Cell(percent(*p.compound_return)) : Cell{};
            }),
        row("Market Beta", [](const PerformanceReport& p) -> Cell { return format_fixed(p.market_beta, 2); }),
        row("Average Positions", [](const PerformanceReport& p) -> Cell { return format_fixed(p.avg_positions, 1); }),
        row("Effective N", [](const PerformanceReport& p) -> Cell { return format_fixed(p.effective_n, 1); }),
        row("OOS Months", [](const PerformanceReport& p) -> Cell { return std::to_string(p.months); }),
        row("Failed Months",
            [](const PerformanceReport& p) -> Cell { return std::to_string(p.failures.size()); }),
    };

    std::size_t label_width = 0;
    for (const auto& r : rows) label_width = std::max(label_width, r.label.size());
    std::vector<std::size_t> widths;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        std::size_t w = columns[c].title.size();
        for (const auto& r : rows) w = std::max(w, r.cells[c].size());
        widths.push_back(w);
    }

    std::ostringstream out;
    out << title << "\n\n";
    out << std::string(label_width, ' ');
    for (std::size_t c = 0; c < columns.size(); ++c) {
        out << "  " << std::string(widths[c] - columns[c].title.size(), ' ') << columns[c].title;
    }
    out << '\n';
    for (const auto& r : rows) {
        out << r.label << std::string(label_width - r.label.size(), ' ');
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out << "  " << std::string(widths[c] - r.cells[c].size(), ' ') << r.cells[c];
        }
        out << '\n';
    }
    return out.str();
}

nlohmann::json report_to_json(const PerformanceReport& report) {
    nlohmann::json j;
    j["label"] = report.label;
    j["avg_excess_return"] = report.avg_excess_return;
    j["stdev"] = report.stdev;
    j["sharpe"] = report.sharpe ? nlohmann::json(*report.sharpe) : nlohmann::json(nullptr);
    j["compound_return"] = report.compound_return ? nlohmann::json(*report.compound_return) : nlohmann::json(nullptr);
    j["market_beta"] = report.market_beta;
    j["avg_positions"] = report.avg_positions;
    j["effective_n"] = report.effective_n;
    j["months"] = report.months;
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : report.failures) {
        failures.push_back({{"month", f.month.str()}, {"error", std::string(to_string(f.code))}, {"message", f.message}});
    }
    j["failures"] = std::move(failures);
    return j;
}

nlohmann::json exhibit_to_json(const std::string& title, const std::vector<ExhibitColumn>& columns) {
    nlohmann::json j;
    j["title"] = title;
    j["columns"] = nlohmann::json::array();
    for (const auto& col : columns) {
        j["columns"].push_back({{"title", col.title},
                                {"report", col.report ? report_to_json(*col.report) : nlohmann::json(nullptr)}});
    }
    return j;
}

}  // namespace qdiv
