#include "qdiv/strategies.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "qdiv/error.hpp"

namespace qdiv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_solved(const SolverSolution& sol, std::string_view what) {
    switch (sol.status) {
        case SolverStatus::optimal: return;
        case SolverStatus::infeasible:
            throw Error(ErrorCode::infeasible, std::string(what) + ": solver reported infeasibility");
        case SolverStatus::max_iterations:
            throw Error(ErrorCode::max_iterations, std::string(what) + ": no convergence after " +
                                                       std::to_string(sol.iterations) + " iterations (KKT residual " +
                                                       std::to_string(sol.kkt_residual) + ")");
    }
}

/// Clips solver dust below zero and rescales to a unit sum.
VectorXd normalize_long_only(VectorXd x) {
    x = x.cwiseMax(0.0);
    const double total = x.sum();
    if (!(total > 0.0)) throw Error(ErrorCode::infeasible, "solution has no positive weight");
    return x / total;
}

Holdings make_holdings(VectorXd weights, StrategyKind kind) {
    Holdings h;
    h.weights = std::move(weights);
    h.strategy = kind;
    return h;
}

QuadraticProgram simplex_program(const MatrixXd& v) {
    QuadraticProgram prob = QuadraticProgram::with_objective(2.0 * v);
    prob.lower.setZero();
    return prob;
}

}  // namespace

std::string_view to_string(StrategyKind kind) noexcept {
    switch (kind) {
        case StrategyKind::min_variance: return "min_variance";
        case StrategyKind::max_diversification: return "max_diversification";
        case StrategyKind::risk_parity: return "risk_parity";
        case StrategyKind::equal_weighted: return "equal_weighted";
        case StrategyKind::value_weighted: return "value_weighted";
    }
    return "unknown";
}

StrategyKind parse_strategy(std::string_view text) {
    if (text == "min_variance") return StrategyKind::min_variance;
    if (text == "max_diversification") return StrategyKind::max_diversification;
    if (text == "risk_parity") return StrategyKind::risk_parity;
    if (text == "equal_weighted") return StrategyKind::equal_weighted;
    if (text == "value_weighted") return StrategyKind::value_weighted;
    throw Error(ErrorCode::invalid_config, "unknown strategy '" + std::string(text) + "'");
}

VectorXd StrategyConfig::resolve_upper(Index n) const {
    VectorXd u;
    if (upper_bounds.size() > 0) {
        if (upper_bounds.size() != n) {
            throw Error(ErrorCode::invalid_config, "upper bound vector length does not match the universe");
        }
        u = upper_bounds;
    } else {
        u = VectorXd::Constant(n, upper_bound.value_or(kInf));
    }
    if (!(u.array() > 0.0).all()) throw Error(ErrorCode::invalid_config, "upper bounds must be positive");
    if (u.cwiseMin(1.0).sum() < 1.0 - 1e-12) {
        throw Error(ErrorCode::infeasible_bounds, "upper bounds sum to less than one; full investment is infeasible");
    }
    return u;
}

Holdings min_variance(const CovarianceModel& model, const StrategyConfig& cfg) {
    const Index n = model.matrix.rows();
    const VectorXd u = cfg.resolve_upper(n);

    QuadraticProgram prob = simplex_program(model.matrix);
    prob.A_eq = MatrixXd::Ones(1, n);
    prob.b_eq = VectorXd::Ones(1);
    prob.upper = u;

    const SolverSolution sol = solve_qp(prob, cfg.solver);
    require_solved(sol, "min_variance");
    Holdings h = make_holdings(normalize_long_only(sol.x), StrategyKind::min_variance);
    check_holdings(h, u);
    return h;
}

Holdings max_diversification(const CovarianceModel& model, const StrategyConfig& cfg) {
    const Index n = model.matrix.rows();
    const VectorXd u = cfg.resolve_upper(n);
    if (!(model.vols.array() > 0.0).all()) {
        throw Error(ErrorCode::degenerate_vols, "max_diversification needs strictly positive volatilities");
    }

    // Homogenized program in z = K x with K = 1'z:
    //   min z'Vz  s.t.  sigma'z = 1,  z >= 0,  z - (1'z) u <= 0.
    QuadraticProgram prob = simplex_program(model.matrix);
    prob.A_eq = model.vols.transpose();
    prob.b_eq = VectorXd::Ones(1);

    std::vector<Index> capped;
    for (Index i = 0; i < n; ++i) {
        if (std::isfinite(u(i)) && u(i) < 1.0) capped.push_back(i);
    }
    if (!capped.empty()) {
        prob.G_in = MatrixXd::Zero(static_cast<Index>(capped.size()), n);
        prob.h_in = VectorXd::Zero(static_cast<Index>(capped.size()));
        for (std::size_t r = 0; r < capped.size(); ++r) {
            const auto row = static_cast<Index>(r);
            prob.G_in.row(row).setConstant(-u(capped[r]));
            prob.G_in(row, capped[r]) += 1.0;
        }
    }

    const SolverSolution sol = solve_qp(prob, cfg.solver);
    require_solved(sol, "max_diversification");
    Holdings h = make_holdings(normalize_long_only(sol.x), StrategyKind::max_diversification);
    check_holdings(h, u);
    return h;
}

double risk_parity_scale(const MatrixXd& v) {
    const double scale = v.diagonal().mean();
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw Error(ErrorCode::not_positive_definite, "risk parity needs a positive mean variance");
    }
    return scale;
}

Holdings risk_parity(const CovarianceModel& model, const StrategyConfig& cfg) {
    if (model.matrix.size() == 0) throw Error(ErrorCode::empty_universe, "risk parity needs at least one asset");
    // The bound d applies to the barrier variable of V / mean variance.
    const MatrixXd v = model.matrix / risk_parity_scale(model.matrix);
    const SolverSolution sol = solve_box_log_barrier(v, cfg.rp_bound, cfg.solver);
    require_solved(sol, "risk_parity");
    Holdings h = make_holdings(sol.x / sol.x.sum(), StrategyKind::risk_parity);
    check_holdings(h, VectorXd::Constant(h.weights.size(), kInf));
    return h;
}

Holdings equal_weighted(Index n) {
    if (n < 1) throw Error(ErrorCode::empty_universe, "equal weighting needs at least one asset");
    return make_holdings(VectorXd::Constant(n, 1.0 / static_cast<double>(n)), StrategyKind::equal_weighted);
}

Holdings value_weighted(const VectorXd& caps) {
    if (caps.size() < 1) throw Error(ErrorCode::empty_universe, "value weighting needs at least one asset");
    if (!caps.allFinite() || !(caps.array() > 0.0).all()) {
        throw Error(ErrorCode::non_positive_cap, "value weighting needs strictly positive, finite caps");
    }
    return make_holdings(caps / caps.sum(), StrategyKind::value_weighted);
}

double diversification_ratio(const CovarianceModel& model, const VectorXd& x) {
    return model.vols.dot(x) / std::sqrt(x.dot(model.matrix * x));
}

VectorXd risk_contributions(const MatrixXd& v, const VectorXd& x) { return x.cwiseProduct(v * x); }

void check_holdings(const Holdings& h, const VectorXd& upper) {
    const VectorXd& x = h.weights;
    if (std::abs(x.sum() - 1.0) > 1e-8) {
        throw Error(ErrorCode::infeasible, "weights sum to " + std::to_string(x.sum()));
    }
    if (x.size() > 0 && x.minCoeff() < -1e-10) {
        throw Error(ErrorCode::infeasible, "negative weight " + std::to_string(x.minCoeff()));
    }
    if (((x - upper).array() > 1e-8).any()) {
        throw Error(ErrorCode::infeasible, "weight above its upper bound");
    }
}

}  // namespace qdiv
