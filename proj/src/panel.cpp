#include "qdiv/panel.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "qdiv/error.hpp"
#include "qdiv/format.hpp"

namespace qdiv {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct CsvTable {
    std::vector<std::string> header;
    std::vector<YearMonth> dates;
    std::vector<std::vector<std::optional<double>>> rows;  // nullopt = empty cell
};

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::malformed_file, "cannot open " + path.string());
    }
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        auto fields = split_commas(text);
        if (table.header.empty()) {
            for (auto f : fields) table.header.emplace_back(trim(f));
            if (table.header.size() < 2 || table.header.front() != "date") {
                throw Error(ErrorCode::malformed_file,
                            path.string() + ": header must start with 'date' and name at least one column");
            }
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw Error(ErrorCode::malformed_file, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                                       std::to_string(table.header.size()) + " fields, got " +
                                                       std::to_string(fields.size()));
        }
        try {
            table.dates.push_back(YearMonth::parse(trim(fields[0])));
        } catch (const Error& e) {
            throw Error(ErrorCode::malformed_file, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        std::vector<std::optional<double>> row;
        row.reserve(fields.size() - 1);
        for (std::size_t j = 1; j < fields.size(); ++j) {
            const auto cell = trim(fields[j]);
            if (cell.empty()) {
                row.emplace_back(std::nullopt);
                continue;
            }
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw Error(ErrorCode::non_finite_value, path.string() + ":" + std::to_string(line_no) +
                                                             ": unparsable cell '" + std::string(cell) + "'");
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorCode::non_finite_value, path.string() + ":" + std::to_string(line_no) +
                                                             ": non-finite cell '" + std::string(cell) + "'");
            }
            row.emplace_back(value);
        }
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty()) {
        throw Error(ErrorCode::malformed_file, path.string() + ": empty file");
    }
    return table;
}

void check_consecutive(const CsvTable& table, const std::filesystem::path& path) {
    for (std::size_t r = 1; r < table.dates.size(); ++r) {
        if (table.dates[r].ordinal() != table.dates[r - 1].ordinal() + 1) {
            throw Error(ErrorCode::malformed_file, path.string() + ": dates must be consecutive months (" +
                                                       table.dates[r - 1].str() + " then " + table.dates[r].str() + ")");
        }
    }
}

void check_same_dates(const CsvTable& a, const CsvTable& b, const std::filesystem::path& b_path) {
    if (a.dates != b.dates) {
        throw Error(ErrorCode::misaligned_dates, b_path.string() + ": month list differs from the returns file");
    }
}

void append_cell(std::string& out, double value) {
    if (std::isnan(value)) return;
    out += format_double(value);
}

std::string format_matrix_csv(const std::vector<YearMonth>& dates, const std::vector<std::string>& ids,
                              const MatrixXd& values) {
    std::string out = "date";
    for (const auto& id : ids) {
        out += ',';
        out += id;
    }
    out += '\n';
    for (Index t = 0; t < values.rows(); ++t) {
        out += dates[static_cast<std::size_t>(t)].str();
        for (Index j = 0; j < values.cols(); ++j) {
            out += ',';
            append_cell(out, values(t, j));
        }
        out += '\n';
    }
    return out;
}

}  // namespace

YearMonth YearMonth::parse(std::string_view text) {
    if (text.size() != 7 || text[4] != '-') {
        throw Error(ErrorCode::malformed_file, "bad month '" + std::string(text) + "', expected YYYY-MM");
    }
    YearMonth ym;
    const auto [p1, e1] = std::from_chars(text.data(), text.data() + 4, ym.year);
    const auto [p2, e2] = std::from_chars(text.data() + 5, text.data() + 7, ym.month);
    if (e1 != std::errc() || e2 != std::errc() || p1 != text.data() + 4 || p2 != text.data() + 7 || ym.month < 1 ||
        ym.month > 12) {
        throw Error(ErrorCode::malformed_file, "bad month '" + std::string(text) + "', expected YYYY-MM");
    }
    return ym;
}

std::string YearMonth::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
}

YearMonth YearMonth::from_ordinal(int ordinal) noexcept {
    return YearMonth{ordinal / 12, ordinal % 12 + 1};
}

void ReturnsPanel::validate() const {
    const Index T = returns.rows();
    const Index N = returns.cols();
    if (static_cast<Index>(dates.size()) != T || market.size() != T || caps.rows() != T) {
        throw Error(ErrorCode::malformed_file, "panel row counts disagree");
    }
    if (static_cast<Index>(asset_ids.size()) != N || caps.cols() != N) {
        throw Error(ErrorCode::malformed_file, "panel column counts disagree");
    }
    for (std::size_t t = 1; t < dates.size(); ++t) {
        if (dates[t].ordinal() != dates[t - 1].ordinal() + 1) {
            throw Error(ErrorCode::malformed_file, "dates are not consecutive months at " + dates[t].str());
        }
    }
    std::set<std::string> seen;
    for (const auto& id : asset_ids) {
        if (!seen.insert(id).second) {
            throw Error(ErrorCode::malformed_file, "duplicate asset id '" + id + "'");
        }
    }
    for (Index t = 0; t < T; ++t) {
        if (!std::isfinite(market(t))) {
            throw Error(ErrorCode::non_finite_value, "market return missing at " + dates[t].str());
        }
        for (Index j = 0; j < N; ++j) {
            const double r = returns(t, j);
            if (std::isinf(r)) {
                throw Error(ErrorCode::non_finite_value, "infinite return for " + asset_ids[j]);
            }
            if (!std::isnan(r) && r <= -1.0) {
                throw Error(ErrorCode::malformed_file,
                            "return <= -1 for " + asset_ids[j] + " at " + dates[t].str());
            }
            const double c = caps(t, j);
            if (std::isinf(c)) {
                throw Error(ErrorCode::non_finite_value, "infinite cap for " + asset_ids[j]);
            }
            if (!std::isnan(c) && c <= 0.0) {
                throw Error(ErrorCode::non_positive_cap, "cap <= 0 for " + asset_ids[j] + " at " + dates[t].str());
            }
        }
    }
}

ReturnsPanel load_panel(const std::filesystem::path& returns_path, const std::filesystem::path& market_path,
                        const std::optional<std::filesystem::path>& caps_path, const PanelLoadOptions& options) {
    const CsvTable ret = read_csv(returns_path);
    const CsvTable mkt = read_csv(market_path);
    if (mkt.header.size() != 2) {
        throw Error(ErrorCode::malformed_file, market_path.string() + ": expected header 'date,market'");
    }
    check_same_dates(ret, mkt, market_path);
    check_consecutive(ret, returns_path);

    ReturnsPanel panel;
    panel.dates = ret.dates;
    panel.asset_ids.assign(ret.header.begin() + 1, ret.header.end());
    const auto T = static_cast<Index>(ret.dates.size());
    const auto N = static_cast<Index>(panel.asset_ids.size());

    panel.returns.resize(T, N);
    panel.market.resize(T);
    for (Index t = 0; t < T; ++t) {
        const auto& row = ret.rows[static_cast<std::size_t>(t)];
        for (Index j = 0; j < N; ++j) {
            panel.returns(t, j) = row[static_cast<std::size_t>(j)].value_or(kMissing);
        }
        const auto& m = mkt.rows[static_cast<std::size_t>(t)][0];
        if (!m) {
            throw Error(ErrorCode::non_finite_value,
                        market_path.string() + ": missing market return at " + ret.dates[t].str());
        }
        panel.market(t) = *m;
    }

    if (caps_path) {
        const CsvTable cap = read_csv(*caps_path);
        check_same_dates(ret, cap, *caps_path);
        if (cap.header != ret.header) {
            throw Error(ErrorCode::malformed_file, caps_path->string() + ": asset columns differ from the returns file");
        }
        panel.caps.resize(T, N);
        for (Index t = 0; t < T; ++t) {
            for (Index j = 0; j < N; ++j) {
                panel.caps(t, j) = cap.rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)].value_or(kMissing);
            }
        }
    } else {
        panel.caps = MatrixXd::Ones(T, N);
    }

    if (!options.allow_missing && (panel.returns.array().isNaN().any() || panel.caps.array().isNaN().any())) {
        throw Error(ErrorCode::non_finite_value, "blank cell while missing values are disallowed");
    }
    panel.validate();
    if (T < options.window + options.skip + 1) {
        throw Error(ErrorCode::short_panel, "panel has " + std::to_string(T) + " months, need at least " +
                                                std::to_string(options.window + options.skip + 1));
    }
    return panel;
}

std::string format_returns_csv(const ReturnsPanel& panel) {
    return format_matrix_csv(panel.dates, panel.asset_ids, panel.returns);
}

std::string format_caps_csv(const ReturnsPanel& panel) {
    return format_matrix_csv(panel.dates, panel.asset_ids, panel.caps);
}

std::string format_market_csv(const ReturnsPanel& panel) {
    return format_matrix_csv(panel.dates, {"market"}, panel.market);
}

EstimationWindow window_at(const ReturnsPanel& panel, Index t, int window, int skip) {
    if (window < 2 || skip < 0) {
        throw Error(ErrorCode::out_of_range, "window must be >= 2 and skip >= 0");
    }
    const Index first = t - skip - window;
    if (first < 0 || t >= panel.months()) {
        throw Error(ErrorCode::out_of_range, "month index " + std::to_string(t) + " lacks " +
                                                 std::to_string(window + skip) + " months of history");
    }
    EstimationWindow w;
    w.returns = panel.returns.middleRows(first, window);
    w.market = panel.market.segment(first, window);
    w.end_date = panel.dates[static_cast<std::size_t>(first + window - 1)];
    return w;
}

std::vector<Index> active_universe(const EstimationWindow& window) {
    std::vector<Index> active;
    for (Index j = 0; j < window.assets(); ++j) {
        if (window.returns.col(j).allFinite()) active.push_back(j);
    }
    if (active.empty()) {
        throw Error(ErrorCode::empty_universe, "no asset has a complete history in the window ending " +
                                                   window.end_date.str());
    }
    return active;
}

EstimationWindow restrict_assets(const EstimationWindow& window, const std::vector<Index>& columns) {
    EstimationWindow out;
    out.returns.resize(window.length(), static_cast<Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        out.returns.col(static_cast<Index>(k)) = window.returns.col(columns[k]);
    }
    out.market = window.market;
    out.end_date = window.end_date;
    return out;
}

}  // namespace qdiv
