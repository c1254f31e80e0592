#pragma once

#include <functional>
#include <string_view>

#include <Eigen/Dense>

namespace qdiv {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

/// minimize 0.5 x'Qx + c'x
/// subject to A_eq x = b_eq, G_in x <= h_in, lower <= x <= upper.
///
/// Empty A_eq / G_in mean no constraints of that kind. Infinite bound entries
/// mean the bound is absent.
struct QuadraticProgram {
    MatrixXd Q;
    VectorXd c;
    MatrixXd A_eq;
    VectorXd b_eq;
    MatrixXd G_in;
    VectorXd h_in;
    VectorXd lower;
    VectorXd upper;

    Index size() const noexcept { return Q.rows(); }

    /// Problem with no constraints, c = 0 and unbounded variables.
    static QuadraticProgram with_objective(MatrixXd q);
};

enum class SolverStatus { optimal, max_iterations, infeasible };

std::string_view to_string(SolverStatus status) noexcept;

/// Lagrangian convention:
///   Q x + c + A_eq' y + G_in' z_in - z_lower + z_upper = 0,
///   z_in, z_lower, z_upper >= 0.
struct SolverSolution {
    VectorXd x;
    double objective = 0;  // 0.5 x'Qx + c'x, no extra factors
    SolverStatus status = SolverStatus::max_iterations;
    double kkt_residual = 0;
    int iterations = 0;
    bool polished = false;

    VectorXd y_eq;
    VectorXd z_in;
    VectorXd z_lower;
    VectorXd z_upper;
};

struct IterationTrace {
    int iteration = 0;
    double primal_residual = 0;
    double dual_residual = 0;
    double complementarity = 0;
    double step = 0;
};

struct SolverOptions {
    double tol = 1e-8;
    int max_iter = 50'000;
    /// Called once per iteration when set; used for convergence traces.
    std::function<void(const IterationTrace&)> trace;
};

struct KktResiduals {
    double primal = 0;           // max constraint violation, absolute
    double dual = 0;             // stationarity, relative to |Q||x| + |c|
    double complementarity = 0;  // max |multiplier * slack|
    double sign = 0;             // max negative part of inequality multipliers

    double max() const noexcept;
};

/// KKT residuals of a candidate primal/dual pair.
KktResiduals qp_kkt_residuals(const QuadraticProgram& prob, const SolverSolution& sol);

/// Primal-dual interior point (Mehrotra predictor-corrector) followed by an
/// active-set polish. Throws Error(not_psd) when Q has an eigenvalue below
/// -1e-10; other failures are reported through `status`.
SolverSolution solve_qp(const QuadraticProgram& prob, const SolverOptions& options = {});

/// minimize 0.5 y'Vy - sum log(y_i) subject to 0 < y_i <= d, by cyclic
/// coordinate descent with exact one-dimensional updates. Throws
/// Error(not_positive_definite) unless V is strictly positive definite.
SolverSolution solve_box_log_barrier(const MatrixXd& V, double d, const SolverOptions& options = {});

/// max_i of the projected-gradient violation used as the barrier problem's
/// optimality measure.
double log_barrier_residual(const MatrixXd& V, const VectorXd& y, double d);

}  // namespace qdiv
