#include "qdiv/cli.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "qdiv/analytics.hpp"
#include "qdiv/error.hpp"
#include "qdiv/format.hpp"

namespace qdiv::cli {

namespace fs = std::filesystem;

namespace {

using OutputFiles = std::vector<std::pair<fs::path, std::string>>;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::json optional_json(const auto& value) {
    return value ? nlohmann::json(*value) : nlohmann::json(nullptr);
}

nlohmann::json manifest(const RunConfig& cfg) {
    return {{"tool", "qdiv"}, {"version", kVersion}, {"subcommand", cfg.subcommand}, {"config", cfg.to_json()}};
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void require_file(const fs::path& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string(what) + " path is required");
    if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " file not found: " + path.string());
}

void require_inputs(const RunConfig& cfg) {
    require_file(cfg.returns_path, "returns");
    require_file(cfg.market_path, "market");
    if (cfg.caps_path) require_file(*cfg.caps_path, "caps");
    try {
        cfg.backtest.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

ReturnsPanel load_inputs(const RunConfig& cfg, int skip) {
    return load_panel(cfg.returns_path, cfg.market_path, cfg.caps_path, {cfg.backtest.window, skip});
}

ExecutionOptions execution(const RunConfig& cfg) {
    return {cfg.serial ? ExecutionMode::serial : ExecutionMode::parallel, cfg.threads};
}

/// All outputs are rendered in memory first; nothing touches disk until the
/// whole run has succeeded.
void commit(const fs::path& out_dir, const OutputFiles& files) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    for (const auto& [rel, content] : files) {
        const fs::path target = out_dir / rel;
        if (target.has_parent_path()) fs::create_directories(target.parent_path());
        write_file_atomic(target, content);
    }
}

std::string range_label(const BacktestResult& r) {
    if (r.oos_dates.empty()) return "no completed months";
    return r.oos_dates.front().str() + " to " + r.oos_dates.back().str();
}

std::optional<PerformanceReport> try_report(const BacktestResult& result, const ReturnsPanel& panel) {
    try {
        return build_report(result, panel);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::empty_series) return std::nullopt;
        throw;
    }
}

nlohmann::json failures_json(const std::vector<Failure>& failures) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : failures) {
        out.push_back({{"month", f.month.str()}, {"error", std::string(to_string(f.code))}, {"message", f.message}});
    }
    return out;
}

std::string model_title(RiskModelKind kind) {
    switch (kind) {
        case RiskModelKind::single_factor: return "Single-Factor";
        case RiskModelKind::constant_correlation: return "Constant Correlation";
        case RiskModelKind::sample_shrunk: return "Sample Covariance (Shrinkage)";
    }
    return "?";
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json RunConfig::to_json() const {
    const auto& b = backtest;
    std::vector<std::string> fmt(formats.begin(), formats.end());
    return {
        {"returns", returns_path.string()},
        {"market", market_path.string()},
        {"caps", caps_path ? nlohmann::json(caps_path->string()) : nlohmann::json(nullptr)},
        {"out", out_dir.string()},
        {"window", b.window},
        {"skip", b.skip},
        {"risk_model", std::string(to_string(b.risk_model))},
        {"strategy", std::string(to_string(b.strategy))},
        {"upper_bound", optional_json(b.strategy_config.upper_bound)},
        {"rp_bound", b.strategy_config.rp_bound},
        {"shrink_delta", optional_json(b.risk_options.shrink_delta)},
        {"solver_tol", b.strategy_config.solver.tol},
        {"solver_max_iter", b.strategy_config.solver.max_iter},
        {"start", b.start ? nlohmann::json(b.start->str()) : nlohmann::json(nullptr)},
        {"end", b.end ? nlohmann::json(b.end->str()) : nlohmann::json(nullptr)},
        {"formats", fmt},
        {"seed", synth.seed},
        {"n_assets", synth.n_assets},
        {"n_months", synth.n_months},
        {"synth_start", synth.start.str()},
        {"mu_m", synth.mu_m},
        {"sigma_m", synth.sigma_m},
        {"beta_range", {synth.beta_range.first, synth.beta_range.second}},
        {"omega_range", {synth.omega_range.first, synth.omega_range.second}},
        {"cap_log_mean", synth.cap_log_mean},
        {"cap_log_sd", synth.cap_log_sd},
        {"window_end", window_end ? nlohmann::json(window_end->str()) : nlohmann::json(nullptr)},
        {"holdings", emit_holdings},
        {"trace_solver", trace_solver},
        {"serial", serial},
        {"threads", threads},
    };
}

void RunConfig::apply_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    auto has = [&](const char* key) { return j.contains(key) && !j.at(key).is_null(); };
    auto month = [&](const char* key) { return YearMonth::parse(j.at(key).get<std::string>()); };
    try {
        if (has("returns")) returns_path = j.at("returns").get<std::string>();
        if (has("market")) market_path = j.at("market").get<std::string>();
        if (j.contains("caps")) caps_path = has("caps") ? std::optional<fs::path>(j.at("caps").get<std::string>()) : std::nullopt;
        if (has("out")) out_dir = j.at("out").get<std::string>();
        if (has("window")) backtest.window = j.at("window").get<int>();
        if (has("skip")) backtest.skip = j.at("skip").get<int>();
        if (has("risk_model")) backtest.risk_model = parse_risk_model(j.at("risk_model").get<std::string>());
        if (has("strategy")) backtest.strategy = parse_strategy(j.at("strategy").get<std::string>());
        if (j.contains("upper_bound")) {
            backtest.strategy_config.upper_bound =
                has("upper_bound") ? std::optional<double>(j.at("upper_bound").get<double>()) : std::nullopt;
        }
        if (has("rp_bound")) backtest.strategy_config.rp_bound = j.at("rp_bound").get<double>();
        if (j.contains("shrink_delta")) {
            backtest.risk_options.shrink_delta =
                has("shrink_delta") ? std::optional<double>(j.at("shrink_delta").get<double>()) : std::nullopt;
        }
        if (has("solver_tol")) backtest.strategy_config.solver.tol = j.at("solver_tol").get<double>();
        if (has("solver_max_iter")) backtest.strategy_config.solver.max_iter = j.at("solver_max_iter").get<int>();
        if (j.contains("start")) backtest.start = has("start") ? std::optional(month("start")) : std::nullopt;
        if (j.contains("end")) backtest.end = has("end") ? std::optional(month("end")) : std::nullopt;
        if (has("formats")) {
            formats.clear();
            for (const auto& f : j.at("formats")) formats.insert(f.get<std::string>());
        }
        if (has("seed")) synth.seed = j.at("seed").get<std::uint64_t>();
        if (has("n_assets")) synth.n_assets = j.at("n_assets").get<int>();
        if (has("n_months")) synth.n_months = j.at("n_months").get<int>();
        if (has("synth_start")) synth.start = month("synth_start");
        if (has("mu_m")) synth.mu_m = j.at("mu_m").get<double>();
        if (has("sigma_m")) synth.sigma_m = j.at("sigma_m").get<double>();
        if (has("beta_range")) synth.beta_range = {j.at("beta_range").at(0).get<double>(), j.at("beta_range").at(1).get<double>()};
        if (has("omega_range")) {
            synth.omega_range = {j.at("omega_range").at(0).get<double>(), j.at("omega_range").at(1).get<double>()};
        }
        if (has("cap_log_mean")) synth.cap_log_mean = j.at("cap_log_mean").get<double>();
        if (has("cap_log_sd")) synth.cap_log_sd = j.at("cap_log_sd").get<double>();
        if (j.contains("window_end")) window_end = has("window_end") ? std::optional(month("window_end")) : std::nullopt;
        if (has("holdings")) emit_holdings = j.at("holdings").get<bool>();
        if (has("trace_solver")) trace_solver = j.at("trace_solver").get<bool>();
        if (has("serial")) serial = j.at("serial").get<bool>();
        if (has("threads")) threads = j.at("threads").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config file: ") + e.what());
    } catch (const Error& e) {
        throw ConfigError(std::string("config file: ") + e.what());
    }
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::malformed_file, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::malformed_file, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string format_cumulative_csv(const BacktestResult& result) {
    std::string out = "date,cumulative_return\n";
    double growth = 1.0;
    for (std::size_t k = 0; k < result.oos_returns.size(); ++k) {
        growth *= 1.0 + result.oos_returns[k];
        out += result.oos_dates[k].str() + "," + format_double(growth - 1.0) + "\n";
    }
    return out;
}

std::string format_oos_csv(const BacktestResult& result) {
    std::string out = "date,excess_return\n";
    for (std::size_t k = 0; k < result.oos_returns.size(); ++k) {
        out += result.oos_dates[k].str() + "," + format_double(result.oos_returns[k]) + "\n";
    }
    return out;
}

std::string format_holdings_csv(const BacktestResult& result, const ReturnsPanel& panel) {
    std::string out = "date,asset_id,weight\n";
    for (const auto& h : result.holdings_history) {
        const std::string date = h.rebalance_date.str();
        for (Index j = 0; j < h.weights.size(); ++j) {
            if (h.weights(j) == 0.0) continue;
            out += date + "," + panel.asset_ids[static_cast<std::size_t>(j)] + "," + format_fixed(h.weights(j), 8) + "\n";
        }
    }
    return out;
}

std::string format_matrix_csv(const MatrixXd& m) {
    std::string out;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

static ExitCode backtest_impl(const RunConfig& cfg) {
    require_inputs(cfg);
    const ReturnsPanel panel = load_inputs(cfg, cfg.backtest.skip);
    const BacktestResult result = run_backtest(panel, cfg.backtest, execution(cfg));
    const ComboKey key{result.risk_model, result.strategy};
    const auto report = try_report(result, panel);

    OutputFiles files;
    if (cfg.formats.contains("json")) {
        nlohmann::json j;
        j["combination"] = key.str();
        j["report"] = report ? report_to_json(*report) : nlohmann::json(nullptr);
        j["failures"] = failures_json(result.failures);
        j["rebalance_months"] = result.rebalance_count();
        files.emplace_back("report.json", dump(j));
    }
    if (cfg.formats.contains("text")) {
        std::string title = "Out-of-sample performance, " + key.str() + " (" + range_label(result) + ")";
        std::string text = format_exhibit_text(title, {{column_title(key), report}});
        if (!result.failures.empty()) {
            text += "\nFailed months:\n";
            for (const auto& f : result.failures) text += "  " + f.month.str() + "  " + std::string(to_string(f.code)) + "\n";
        }
        files.emplace_back("report.txt", text);
    }
    if (cfg.formats.contains("csv")) {
        files.emplace_back("oos_returns.csv", format_oos_csv(result));
        files.emplace_back("holdings.csv", format_holdings_csv(result, panel));
        files.emplace_back("cumulative.csv", format_cumulative_csv(result));
    }
    files.emplace_back("manifest.json", dump(manifest(cfg)));
    commit(cfg.out_dir, files);
    return ExitCode::success;
}

static ExitCode matrix_impl(const RunConfig& cfg) {
    require_inputs(cfg);
    const ReturnsPanel panel = load_inputs(cfg, cfg.backtest.skip);
    const auto results = run_matrix(panel, cfg.backtest, execution(cfg));

    std::map<ComboKey, std::optional<PerformanceReport>> reports;
    for (const auto& [key, result] : results) reports[key] = try_report(result, panel);

    const auto& vw = results.at({std::nullopt, StrategyKind::value_weighted});
    OutputFiles files;
    nlohmann::json summary = nlohmann::json::object();
    for (const auto model : {RiskModelKind::single_factor, RiskModelKind::constant_correlation,
                             RiskModelKind::sample_shrunk}) {
        std::vector<ExhibitColumn> columns;
        for (const auto& key : matrix_keys()) {
            if (key.risk_model && *key.risk_model != model) continue;
            columns.push_back({column_title(key), reports.at(key)});
        }
        const std::string title =
            "Performance of " + model_title(model) + " Risk Model Portfolios (" + range_label(vw) + ")";
        const std::string stem = "exhibit_" + std::string(to_string(model));
        if (cfg.formats.contains("text")) files.emplace_back(stem + ".txt", format_exhibit_text(title, columns));
        if (cfg.formats.contains("json")) files.emplace_back(stem + ".json", dump(exhibit_to_json(title, columns)));
    }
    for (const auto& [key, result] : results) {
        const auto& report = reports.at(key);
        summary[key.str()] = {{"report", report ? report_to_json(*report) : nlohmann::json(nullptr)},
                              {"failures", failures_json(result.failures)}};
        if (cfg.formats.contains("csv")) {
            files.emplace_back(fs::path("cumulative") / (key.str() + ".csv"), format_cumulative_csv(result));
            files.emplace_back(fs::path("oos_returns") / (key.str() + ".csv"), format_oos_csv(result));
        }
    }
    if (cfg.formats.contains("json")) files.emplace_back("summary.json", dump(summary));
    files.emplace_back("manifest.json", dump(manifest(cfg)));
    commit(cfg.out_dir, files);
    return ExitCode::success;
}

static ExitCode generate_impl(const RunConfig& cfg) {
    try {
        cfg.synth.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    const auto [panel, truth] = generate(cfg.synth);
    OutputFiles files{
        {"returns.csv", format_returns_csv(panel)},
        {"market.csv", format_market_csv(panel)},
        {"caps.csv", format_caps_csv(panel)},
        {"ground_truth.json", dump(truth_to_json(cfg.synth, truth, panel))},
        {"manifest.json", dump(manifest(cfg))},
    };
    commit(cfg.out_dir, files);
    return ExitCode::success;
}

static ExitCode estimate_impl(const RunConfig& cfg) {
    require_inputs(cfg);
    const ReturnsPanel panel = load_panel(cfg.returns_path, cfg.market_path, cfg.caps_path, {cfg.backtest.window, 0});
    const Index w = cfg.backtest.window;

    const YearMonth end = cfg.window_end.value_or(panel.dates.back());
    const Index end_row = end.ordinal() - panel.dates.front().ordinal();
    if (end_row < w - 1 || end_row >= panel.months()) {
        throw Error(ErrorCode::out_of_range, "window ending " + end.str() + " does not fit inside the panel");
    }
    EstimationWindow full;
    full.returns = panel.returns.middleRows(end_row - w + 1, w);
    full.market = panel.market.segment(end_row - w + 1, w);
    full.end_date = end;
    const auto universe = active_universe(full);
    const EstimationWindow window = restrict_assets(full, universe);

    const RiskModelKind kind = cfg.backtest.risk_model;
    const CovarianceModel model = estimate_covariance(window, kind, cfg.backtest.risk_options);

    nlohmann::json est;
    est["kind"] = std::string(to_string(kind));
    est["window_end"] = end.str();
    est["window"] = w;
    std::vector<std::string> ids;
    for (const Index j : universe) ids.push_back(panel.asset_ids[static_cast<std::size_t>(j)]);
    est["asset_ids"] = ids;
    est["vols"] = to_std(model.vols);
    est["min_eigenvalue"] = min_eigenvalue(model.matrix);
    est["npd"] = model.npd;

    OutputFiles files;
    files.emplace_back("covariance.csv", format_matrix_csv(model.matrix));

    switch (kind) {
        case RiskModelKind::single_factor: {
            const FactorEstimates f = estimate_loadings(window);
            est["beta_hat"] = to_std(f.beta_hat);
            est["beta"] = to_std(shrink_betas(f.beta_hat));
            est["omega2_hat"] = to_std(f.omega2_hat);
            est["omega2"] = to_std(shrink_log_variances(f.omega2_hat.cwiseMax(kVarianceFloor)));
            est["sigma2_f"] = f.sigma2_f;
            break;
        }
        case RiskModelKind::constant_correlation: {
            const MatrixXd s = sample_covariance(window.returns);
            const auto cc = estimate_constant_correlation(window);
            est["rho"] = cc.rho;
            est["sigma"] = to_std(cc.sigma);
            est["sample_vols"] = to_std(s.diagonal().cwiseSqrt());
            files.emplace_back("correlations.csv", format_matrix_csv(correlation_from_covariance(s)));
            break;
        }
        case RiskModelKind::sample_shrunk: {
            const MatrixXd s = sample_covariance(window.returns);
            const auto& fixed = cfg.backtest.risk_options.shrink_delta;
            if (fixed) {
                est["delta"] = *fixed;
                est["delta_source"] = "config";
            } else {
                est["delta"] = s.rows() > 1 ? ledoit_wolf_intensity(window.returns) : 0.0;
                est["delta_source"] = "ledoit_wolf";
            }
            if (s.rows() > 1) est["target_rho"] = average_correlation(s);
            files.emplace_back("correlations.csv", format_matrix_csv(correlation_from_covariance(s)));
            break;
        }
    }

    if (cfg.emit_holdings) {
        std::string trace = "iteration,primal_residual,dual_residual,complementarity,step\n";
        BacktestConfig bc = cfg.backtest;
        if (cfg.trace_solver) {
            bc.strategy_config.solver.trace = [&trace](const IterationTrace& it) {
                trace += std::to_string(it.iteration) + "," + format_double(it.primal_residual) + "," +
                         format_double(it.dual_residual) + "," + format_double(it.complementarity) + "," +
                         format_double(it.step) + "\n";
            };
        }
        Holdings h;
        const VectorXd caps = panel.caps.row(end_row)(universe);
        switch (bc.strategy) {
            case StrategyKind::min_variance: h = min_variance(model, bc.strategy_config); break;
            case StrategyKind::max_diversification: h = max_diversification(model, bc.strategy_config); break;
            case StrategyKind::risk_parity: h = risk_parity(model, bc.strategy_config); break;
            case StrategyKind::equal_weighted: h = equal_weighted(static_cast<Index>(universe.size())); break;
            case StrategyKind::value_weighted: h = value_weighted(caps); break;
        }
        const YearMonth rebalance = end.plus_months(1 + cfg.backtest.skip);
        std::string csv = "date,asset_id,weight\n";
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const double x = h.weights(static_cast<Index>(k));
            if (x != 0.0) csv += rebalance.str() + "," + ids[k] + "," + format_fixed(x, 8) + "\n";
        }
        est["strategy"] = std::string(to_string(bc.strategy));
        files.emplace_back("holdings.csv", csv);
        if (cfg.trace_solver) files.emplace_back("solver_trace.csv", trace);
    }

    files.emplace_back("estimates.json", dump(est));
    files.emplace_back("manifest.json", dump(manifest(cfg)));
    commit(cfg.out_dir, files);
    return ExitCode::success;
}


namespace {

ExitCode guarded(const std::function<ExitCode()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ExitCode::config_error;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::invalid_config ? ExitCode::config_error : ExitCode::runtime_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ExitCode::runtime_failure;
    }
}

}  // namespace

ExitCode cmd_backtest(const RunConfig& cfg) { return guarded([&] { return backtest_impl(cfg); }); }
ExitCode cmd_matrix(const RunConfig& cfg) { return guarded([&] { return matrix_impl(cfg); }); }
ExitCode cmd_generate(const RunConfig& cfg) { return guarded([&] { return generate_impl(cfg); }); }
ExitCode cmd_estimate(const RunConfig& cfg) { return guarded([&] { return estimate_impl(cfg); }); }

namespace {

/// Raw flag storage; a flag only overrides the resolved config when given.
struct Flags {
    std::string config, returns, market, caps, out, risk_model, strategy, start, end, window_end, synth_start;
    std::vector<std::string> formats;
    int window = 0, skip = 0, n_assets = 0, n_months = 0, threads = 0, max_iter = 0;
    double upper_bound = 0, rp_bound = 0, shrink_delta = 0, mu_m = 0, sigma_m = 0, tol = 0;
    std::vector<double> beta_range, omega_range;
    std::uint64_t seed = 0;
    bool serial = false, holdings = false, trace = false;
};

struct Registered {
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> options;
    CLI::Option* config = nullptr;
};

void add_common(CLI::App* app, Flags& f, Registered& reg) {
    reg.config = app->add_option("--config", f.config,
                                 "JSON config file (a previous manifest.json also works); flags override it");
    reg.options.emplace_back(app->add_option("--out", f.out, "output directory (default: out)"),
                             [&f](RunConfig& c) { c.out_dir = f.out; });
    reg.options.emplace_back(app->add_option("--format", f.formats, "outputs to write: json, text, csv (default: all)")
                                 ->check(CLI::IsMember({"json", "text", "csv"})),
                             [&f](RunConfig& c) { c.formats = {f.formats.begin(), f.formats.end()}; });
}

void add_inputs(CLI::App* app, Flags& f, Registered& reg) {
    reg.options.emplace_back(app->add_option("--returns", f.returns, "returns CSV (date,<asset ids...>)"),
                             [&f](RunConfig& c) { c.returns_path = f.returns; });
    reg.options.emplace_back(app->add_option("--market", f.market, "market CSV (date,market)"),
                             [&f](RunConfig& c) { c.market_path = f.market; });
    reg.options.emplace_back(app->add_option("--caps", f.caps, "market-cap CSV; omitted means equal caps"),
                             [&f](RunConfig& c) { c.caps_path = fs::path(f.caps); });
}

void add_model(CLI::App* app, Flags& f, Registered& reg, bool with_strategy) {
    reg.options.emplace_back(
        app->add_option("--risk-model", f.risk_model, "single_factor | constant_correlation | sample_shrunk")
            ->check(CLI::IsMember({"single_factor", "constant_correlation", "sample_shrunk"})),
        [&f](RunConfig& c) { c.backtest.risk_model = parse_risk_model(f.risk_model); });
    if (with_strategy) {
        reg.options.emplace_back(
            app->add_option("--strategy", f.strategy,
                            "min_variance | max_diversification | risk_parity | equal_weighted | value_weighted")
                ->check(CLI::IsMember(
                    {"min_variance", "max_diversification", "risk_parity", "equal_weighted", "value_weighted"})),
            [&f](RunConfig& c) { c.backtest.strategy = parse_strategy(f.strategy); });
    }
    reg.options.emplace_back(app->add_option("--window", f.window, "estimation window in months (default 60)"),
                             [&f](RunConfig& c) { c.backtest.window = f.window; });
    reg.options.emplace_back(
        app->add_option("--skip", f.skip, "months excluded between window and OOS month, 0 or 1 (default 1)"),
        [&f](RunConfig& c) { c.backtest.skip = f.skip; });
    reg.options.emplace_back(app->add_option("--upper-bound", f.upper_bound, "uniform per-asset weight cap u"),
                             [&f](RunConfig& c) { c.backtest.strategy_config.upper_bound = f.upper_bound; });
    reg.options.emplace_back(app->add_option("--rp-bound", f.rp_bound, "risk-parity bound d on y for V / mean variance (default 5)"),
                             [&f](RunConfig& c) { c.backtest.strategy_config.rp_bound = f.rp_bound; });
    reg.options.emplace_back(
        app->add_option("--shrink-delta", f.shrink_delta,
                        "fixed target weight for sample_shrunk in [0,1] (default: Ledoit-Wolf estimate)"),
        [&f](RunConfig& c) { c.backtest.risk_options.shrink_delta = f.shrink_delta; });
    reg.options.emplace_back(app->add_option("--tol", f.tol, "solver tolerance (default 1e-8)"),
                             [&f](RunConfig& c) { c.backtest.strategy_config.solver.tol = f.tol; });
    reg.options.emplace_back(app->add_option("--max-iter", f.max_iter, "solver iteration cap (default 50000)"),
                             [&f](RunConfig& c) { c.backtest.strategy_config.solver.max_iter = f.max_iter; });
}

void add_schedule(CLI::App* app, Flags& f, Registered& reg) {
    reg.options.emplace_back(app->add_option("--start", f.start, "first OOS month, YYYY-MM"),
                             [&f](RunConfig& c) { c.backtest.start = YearMonth::parse(f.start); });
    reg.options.emplace_back(app->add_option("--end", f.end, "last OOS month, YYYY-MM"),
                             [&f](RunConfig& c) { c.backtest.end = YearMonth::parse(f.end); });
    reg.options.emplace_back(app->add_flag("--serial", f.serial, "evaluate months on one thread"),
                             [&f](RunConfig& c) { c.serial = f.serial; });
    reg.options.emplace_back(app->add_option("--threads", f.threads, "worker threads (default: all cores)"),
                             [&f](RunConfig& c) { c.threads = f.threads; });
}

void add_synth(CLI::App* app, Flags& f, Registered& reg) {
    reg.options.emplace_back(app->add_option("--seed", f.seed, "RNG seed (default 1)"),
                             [&f](RunConfig& c) { c.synth.seed = f.seed; });
    reg.options.emplace_back(app->add_option("--n-assets", f.n_assets, "number of assets (default 100)"),
                             [&f](RunConfig& c) { c.synth.n_assets = f.n_assets; });
    reg.options.emplace_back(app->add_option("--n-months", f.n_months, "number of months (default 600)"),
                             [&f](RunConfig& c) { c.synth.n_months = f.n_months; });
    reg.options.emplace_back(app->add_option("--first-month", f.synth_start, "first generated month (default 1970-01)"),
                             [&f](RunConfig& c) { c.synth.start = YearMonth::parse(f.synth_start); });
    reg.options.emplace_back(app->add_option("--mu-m", f.mu_m, "market monthly mean (default 0.005)"),
                             [&f](RunConfig& c) { c.synth.mu_m = f.mu_m; });
    reg.options.emplace_back(app->add_option("--sigma-m", f.sigma_m, "market monthly volatility (default 0.045)"),
                             [&f](RunConfig& c) { c.synth.sigma_m = f.sigma_m; });
    reg.options.emplace_back(app->add_option("--beta-range", f.beta_range, "true beta range LOW HIGH")->expected(2),
                             [&f](RunConfig& c) { c.synth.beta_range = {f.beta_range[0], f.beta_range[1]}; });
    reg.options.emplace_back(
        app->add_option("--omega-range", f.omega_range, "idiosyncratic volatility range LOW HIGH")->expected(2),
        [&f](RunConfig& c) { c.synth.omega_range = {f.omega_range[0], f.omega_range[1]}; });
}

nlohmann::json read_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        if (j.contains("config") && j.at("config").is_object()) return j.at("config");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config file " + path.string() + ": " + e.what());
    }
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Long-only diversification backtests over three covariance risk models"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Flags flags;
    std::map<std::string, Registered> registry;

    auto* backtest = app.add_subcommand("backtest", "Backtest one risk model x strategy combination");
    add_common(backtest, flags, registry["backtest"]);
    add_inputs(backtest, flags, registry["backtest"]);
    add_model(backtest, flags, registry["backtest"], true);
    add_schedule(backtest, flags, registry["backtest"]);

    auto* matrix = app.add_subcommand("matrix", "Backtest all nine combinations plus both benchmarks");
    add_common(matrix, flags, registry["matrix"]);
    add_inputs(matrix, flags, registry["matrix"]);
    add_model(matrix, flags, registry["matrix"], false);
    add_schedule(matrix, flags, registry["matrix"]);

    auto* gen = app.add_subcommand("generate", "Write a synthetic single-factor returns panel");
    add_common(gen, flags, registry["generate"]);
    add_synth(gen, flags, registry["generate"]);

    auto* estimate = app.add_subcommand("estimate", "Dump one window's covariance estimate and its ingredients");
    add_common(estimate, flags, registry["estimate"]);
    add_inputs(estimate, flags, registry["estimate"]);
    add_model(estimate, flags, registry["estimate"], true);
    registry["estimate"].options.emplace_back(
        estimate->add_option("--window-end", flags.window_end, "last month of the window, YYYY-MM (default: last)"),
        [&flags](RunConfig& c) { c.window_end = YearMonth::parse(flags.window_end); });
    registry["estimate"].options.emplace_back(
        estimate->add_flag("--holdings", flags.holdings, "also optimize the window with --strategy"),
        [&flags](RunConfig& c) { c.emit_holdings = flags.holdings; });
    registry["estimate"].options.emplace_back(
        estimate->add_flag("--trace-solver", flags.trace, "write per-iteration solver residuals (with --holdings)"),
        [&flags](RunConfig& c) { c.trace_solver = flags.trace; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::config_error);
    }

    RunConfig cfg;
    CLI::App* chosen = app.get_subcommands().front();
    cfg.subcommand = chosen->get_name();
    try {
        const Registered& reg = registry.at(cfg.subcommand);
        if (reg.config->count() > 0) cfg.apply_json(read_config_file(flags.config));
        for (const auto& [opt, apply] : reg.options) {
            if (opt->count() > 0) apply(cfg);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config_error);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config_error);
    }

    if (cfg.subcommand == "backtest") return static_cast<int>(cmd_backtest(cfg));
    if (cfg.subcommand == "matrix") return static_cast<int>(cmd_matrix(cfg));
    if (cfg.subcommand == "generate") return static_cast<int>(cmd_generate(cfg));
    return static_cast<int>(cmd_estimate(cfg));
}

}  // namespace qdiv::cli
