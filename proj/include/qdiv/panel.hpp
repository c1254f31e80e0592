#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace qdiv {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

/// Calendar year-month. The pipeline is strictly monthly.
struct YearMonth {
    int year = 1970;
    int month = 1;  // 1..12

    static YearMonth parse(std::string_view text);  // "YYYY-MM"
    std::string str() const;

    /// Months since year 0; consecutive months differ by exactly one.
    int ordinal() const noexcept { return year * 12 + (month - 1); }
    static YearMonth from_ordinal(int ordinal) noexcept;
    YearMonth plus_months(int n) const noexcept { return from_ordinal(ordinal() + n); }

    friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};

/// Aligned monthly excess-return panel. Missing observations are NaN in
/// `returns` (and `caps`); everything else is finite.
struct ReturnsPanel {
    std::vector<YearMonth> dates;      // T, consecutive months
    std::vector<std::string> asset_ids;  // N, unique
    MatrixXd returns;                  // T x N simple excess returns
    VectorXd market;                   // T market excess returns
    MatrixXd caps;                     // T x N market capitalizations

    Index months() const noexcept { return returns.rows(); }
    Index assets() const noexcept { return returns.cols(); }

    /// Throws Error on any invariant violation.
    void validate() const;
};

/// Rows [t - skip - w, t - skip) of a panel, possibly restricted to a subset
/// of asset columns.
struct EstimationWindow {
    MatrixXd returns;  // W x N
    VectorXd market;   // W
    YearMonth end_date;

    Index length() const noexcept { return returns.rows(); }
    Index assets() const noexcept { return returns.cols(); }
};

struct PanelLoadOptions {
    int window = 60;
    int skip = 1;
    /// When false an empty returns or caps cell is rejected as NonFiniteValue
    /// instead of being read as missing.
    bool allow_missing = true;
};

/// Reads the returns/market/caps CSV trio. Without a caps file every cap is
/// 1, so the value-weighted benchmark coincides with equal weighting.
ReturnsPanel load_panel(const std::filesystem::path& returns_path,
                        const std::filesystem::path& market_path,
                        const std::optional<std::filesystem::path>& caps_path = std::nullopt,
                        const PanelLoadOptions& options = {});

/// CSV writers matching load_panel's formats (17 significant digits, empty
/// cell for NaN).
std::string format_returns_csv(const ReturnsPanel& panel);
std::string format_market_csv(const ReturnsPanel& panel);
std::string format_caps_csv(const ReturnsPanel& panel);

/// Estimation window for the out-of-sample month at row `t`.
EstimationWindow window_at(const ReturnsPanel& panel, Index t, int window, int skip = 1);

/// Columns with complete finite histories over the window.
std::vector<Index> active_universe(const EstimationWindow& window);

/// Copy of the window holding only the listed asset columns.
EstimationWindow restrict_assets(const EstimationWindow& window, const std::vector<Index>& columns);

}  // namespace qdiv
