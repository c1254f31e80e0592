#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "qdiv/backtest.hpp"
#include "qdiv/synthgen.hpp"

namespace qdiv::cli {

inline constexpr const char* kVersion = "1.0.0";

enum class ExitCode : int { success = 0, runtime_failure = 1, config_error = 2 };

/// Fully resolved settings for one invocation (defaults < config file < flags).
struct RunConfig {
    std::string subcommand;
    std::filesystem::path returns_path;
    std::filesystem::path market_path;
    std::optional<std::filesystem::path> caps_path;
    std::filesystem::path out_dir = "out";
    BacktestConfig backtest;
    std::set<std::string> formats{"json", "text", "csv"};
    SynthSpec synth;
    std::optional<YearMonth> window_end;  // estimate: last month of the window
    bool emit_holdings = false;           // estimate: also optimize the window
    bool trace_solver = false;            // estimate: write per-iteration residuals
    bool serial = false;
    int threads = 0;

    nlohmann::json to_json() const;
    /// Overlays keys present in `j` onto this config.
    void apply_json(const nlohmann::json& j);
};

/// Entry point used by the executable. Never throws.
int run(int argc, const char* const* argv);

ExitCode cmd_backtest(const RunConfig& cfg);
ExitCode cmd_matrix(const RunConfig& cfg);
ExitCode cmd_generate(const RunConfig& cfg);
ExitCode cmd_estimate(const RunConfig& cfg);

/// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// date,cumulative_return with cum_t = prod(1 + r_s) - 1.
std::string format_cumulative_csv(const BacktestResult& result);
std::string format_oos_csv(const BacktestResult& result);
/// date,asset_id,weight for every nonzero weight, 8 decimals.
std::string format_holdings_csv(const BacktestResult& result, const ReturnsPanel& panel);
/// N rows of N comma-separated values, 17 significant digits, no header.
std::string format_matrix_csv(const MatrixXd& m);

}  // namespace qdiv::cli
