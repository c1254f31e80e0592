#include "qdiv/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qdiv/error.hpp"
#include "qdiv/riskmodels.hpp"

namespace qdiv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStepFraction = 0.995;
constexpr int kIpmIterationCap = 500;
constexpr int kStagnationWindow = 50;
// Complementarity beyond this means the iterates are running off to infinity.
constexpr double kDivergedMu = 1e100;
constexpr double kPolishMinRcond = 1e-14;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double dual_scale(const QuadraticProgram& prob, const VectorXd& x) {
    const double q_norm = prob.Q.size() == 0 ? 0.0 : prob.Q.cwiseAbs().rowwise().sum().maxCoeff();
    return std::max(q_norm * inf_norm(x) + inf_norm(prob.c), 1e-30);
}

/// The inequality block C x <= d stacked as [G rows | lower bounds | upper bounds].
class Inequalities {
public:
    explicit Inequalities(const QuadraticProgram& prob) : g_(prob.G_in) {
        const Index n = prob.size();
        std::vector<double> lo_val;
        std::vector<double> up_val;
        for (Index j = 0; j < n; ++j) {
            if (std::isfinite(prob.lower(j))) {
                lo_idx_.push_back(j);
                lo_val.push_back(prob.lower(j));
            }
            if (std::isfinite(prob.upper(j))) {
                up_idx_.push_back(j);
                up_val.push_back(prob.upper(j));
            }
        }
        m_g_ = g_.rows();
        const Index m = size();
        d_.resize(m);
        if (m_g_ > 0) d_.head(m_g_) = prob.h_in;
        for (std::size_t k = 0; k < lo_idx_.size(); ++k) d_(lo_offset() + static_cast<Index>(k)) = -lo_val[k];
        for (std::size_t k = 0; k < up_idx_.size(); ++k) d_(up_offset() + static_cast<Index>(k)) = up_val[k];
    }

    Index size() const noexcept {
        return m_g_ + static_cast<Index>(lo_idx_.size()) + static_cast<Index>(up_idx_.size());
    }
    const VectorXd& rhs() const noexcept { return d_; }

    VectorXd apply(const VectorXd& x) const {
        VectorXd out(size());
        if (m_g_ > 0) out.head(m_g_) = g_ * x;
        for (std::size_t k = 0; k < lo_idx_.size(); ++k) out(lo_offset() + static_cast<Index>(k)) = -x(lo_idx_[k]);
        for (std::size_t k = 0; k < up_idx_.size(); ++k) out(up_offset() + static_cast<Index>(k)) = x(up_idx_[k]);
        return out;
    }

    VectorXd apply_transpose(const VectorXd& v, Index n) const {
        VectorXd out = VectorXd::Zero(n);
        if (m_g_ > 0) out.noalias() += g_.transpose() * v.head(m_g_);
        for (std::size_t k = 0; k < lo_idx_.size(); ++k) out(lo_idx_[k]) -= v(lo_offset() + static_cast<Index>(k));
        for (std::size_t k = 0; k < up_idx_.size(); ++k) out(up_idx_[k]) += v(up_offset() + static_cast<Index>(k));
        return out;
    }

    /// Adds C' diag(w) C to `k`.
    void add_weighted_gram(MatrixXd& k, const VectorXd& w) const {
        if (m_g_ > 0) k.noalias() += g_.transpose() * w.head(m_g_).asDiagonal() * g_;
        for (std::size_t i = 0; i < lo_idx_.size(); ++i) k(lo_idx_[i], lo_idx_[i]) += w(lo_offset() + static_cast<Index>(i));
        for (std::size_t i = 0; i < up_idx_.size(); ++i) k(up_idx_[i], up_idx_[i]) += w(up_offset() + static_cast<Index>(i));
    }

    void split_multipliers(const VectorXd& z, Index n, SolverSolution& sol) const {
        sol.z_in = z.head(m_g_);
        sol.z_lower = VectorXd::Zero(n);
        sol.z_upper = VectorXd::Zero(n);
        for (std::size_t k = 0; k < lo_idx_.size(); ++k) sol.z_lower(lo_idx_[k]) = z(lo_offset() + static_cast<Index>(k));
        for (std::size_t k = 0; k < up_idx_.size(); ++k) sol.z_upper(up_idx_[k]) = z(up_offset() + static_cast<Index>(k));
    }

    Index g_rows() const noexcept { return m_g_; }
    Index lo_offset() const noexcept { return m_g_; }
    Index up_offset() const noexcept { return m_g_ + static_cast<Index>(lo_idx_.size()); }
    const std::vector<Index>& lo_idx() const noexcept { return lo_idx_; }
    const std::vector<Index>& up_idx() const noexcept { return up_idx_; }

private:
    const MatrixXd& g_;
    Index m_g_ = 0;
    std::vector<Index> lo_idx_;
    std::vector<Index> up_idx_;
    VectorXd d_;
};

/// Factorization of the reduced Newton system
///   [K  A'] [dx]   [r1]
///   [A  0 ] [dy] = [r2]
/// with K = Q + C'WC, via Cholesky of K and of the Schur complement A K^-1 A'.
class NewtonSystem {
public:
    bool factor(MatrixXd k, const MatrixXd& a) {
        const double base = 1e-14 * std::max(1.0, k.diagonal().cwiseAbs().maxCoeff());
        double reg = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            if (reg > 0.0) k.diagonal().array() += reg;
            k_llt_.compute(k);
            if (k_llt_.info() == Eigen::Success) break;
            reg = reg == 0.0 ? base : reg * 100.0;
            if (attempt == 7) return false;
        }
        a_ = &a;
        if (a.rows() > 0) {
            k_inv_at_ = k_llt_.solve(a.transpose());
            schur_llt_.compute(a * k_inv_at_);
            if (schur_llt_.info() != Eigen::Success) return false;
        }
        return true;
    }

    void solve(const VectorXd& r1, const VectorXd& r2, VectorXd& dx, VectorXd& dy) const {
        const VectorXd u = k_llt_.solve(r1);
        if (a_->rows() == 0) {
            dx = u;
            dy.resize(0);
            return;
        }
        dy = schur_llt_.solve(*a_ * u - r2);
        dx = u - k_inv_at_ * dy;
    }

private:
    Eigen::LLT<MatrixXd> k_llt_;
    Eigen::LLT<MatrixXd> schur_llt_;
    MatrixXd k_inv_at_;
    const MatrixXd* a_ = nullptr;
};

double max_step(const VectorXd& v, const VectorXd& dv) {
    double alpha = 1.0;
    for (Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    }
    return alpha;
}

void validate_shapes(const QuadraticProgram& prob) {
    const Index n = prob.size();
    const bool ok = prob.Q.cols() == n && prob.c.size() == n && prob.lower.size() == n && prob.upper.size() == n &&
                    (prob.A_eq.rows() == 0 || prob.A_eq.cols() == n) && prob.A_eq.rows() == prob.b_eq.size() &&
                    (prob.G_in.rows() == 0 || prob.G_in.cols() == n) && prob.G_in.rows() == prob.h_in.size();
    if (!ok) throw Error(ErrorCode::invalid_config, "quadratic program dimensions are inconsistent");
    if (prob.A_eq.rows() >= n && n > 0) {
        throw Error(ErrorCode::invalid_config, "quadratic program needs fewer equalities than variables");
    }
}

void finalize(const QuadraticProgram& prob, SolverSolution& sol) {
    sol.objective = 0.5 * sol.x.dot(prob.Q * sol.x) + prob.c.dot(sol.x);
    sol.kkt_residual = qp_kkt_residuals(prob, sol).max();
}

/// Re-solves the equality-constrained QP implied by the interior point's
/// active set. Returns false when the guess does not certify.
bool polish(const QuadraticProgram& prob, const Inequalities& ineq, const VectorXd& s, const VectorXd& z,
            double tol, SolverSolution& out) {
    const Index n = prob.size();
    const Index e = prob.A_eq.rows();

    // 0 free, 1 fixed at lower, 2 fixed at upper
    std::vector<int> state(static_cast<std::size_t>(n), 0);
    for (std::size_t k = 0; k < ineq.lo_idx().size(); ++k) {
        const Index r = ineq.lo_offset() + static_cast<Index>(k);
        if (z(r) > s(r)) state[static_cast<std::size_t>(ineq.lo_idx()[k])] = 1;
    }
    for (std::size_t k = 0; k < ineq.up_idx().size(); ++k) {
        const Index r = ineq.up_offset() + static_cast<Index>(k);
        if (z(r) > s(r)) state[static_cast<std::size_t>(ineq.up_idx()[k])] = 2;
    }
    std::vector<Index> active_g;
    for (Index i = 0; i < ineq.g_rows(); ++i) {
        if (z(i) > s(i)) active_g.push_back(i);
    }

    std::vector<Index> free_idx;
    VectorXd x = VectorXd::Zero(n);
    for (Index j = 0; j < n; ++j) {
        switch (state[static_cast<std::size_t>(j)]) {
            case 0: free_idx.push_back(j); break;
            case 1: x(j) = prob.lower(j); break;
            default: x(j) = prob.upper(j); break;
        }
    }
    const auto nf = static_cast<Index>(free_idx.size());
    const auto ng = static_cast<Index>(active_g.size());
    const Index dim = nf + e + ng;
    if (nf == 0 || dim == 0) return false;

    MatrixXd kkt = MatrixXd::Zero(dim, dim);
    VectorXd rhs(dim);
    const VectorXd qx_fixed = prob.Q * x;
    for (Index a = 0; a < nf; ++a) {
        const Index ja = free_idx[static_cast<std::size_t>(a)];
        for (Index b = 0; b < nf; ++b) kkt(a, b) = prob.Q(ja, free_idx[static_cast<std::size_t>(b)]);
        rhs(a) = -prob.c(ja) - qx_fixed(ja);
        for (Index r = 0; r < e; ++r) {
            kkt(a, nf + r) = prob.A_eq(r, ja);
            kkt(nf + r, a) = prob.A_eq(r, ja);
        }
        for (Index r = 0; r < ng; ++r) {
            const double g = prob.G_in(active_g[static_cast<std::size_t>(r)], ja);
            kkt(a, nf + e + r) = g;
            kkt(nf + e + r, a) = g;
        }
    }
    if (e > 0) rhs.segment(nf, e) = prob.b_eq - prob.A_eq * x;
    for (Index r = 0; r < ng; ++r) {
        const Index gi = active_g[static_cast<std::size_t>(r)];
        rhs(nf + e + r) = prob.h_in(gi) - prob.G_in.row(gi).dot(x);
    }

    Eigen::PartialPivLU<MatrixXd> lu(kkt);
    // A singular reduced system has a face of minimizers; keep the interior point.
    if (!(lu.rcond() > kPolishMinRcond)) return false;
    const VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite()) return false;

    for (Index a = 0; a < nf; ++a) x(free_idx[static_cast<std::size_t>(a)]) = sol(a);
    SolverSolution cand;
    cand.x = x;
    cand.y_eq = sol.segment(nf, e);
    cand.z_in = VectorXd::Zero(ineq.g_rows());
    for (Index r = 0; r < ng; ++r) cand.z_in(active_g[static_cast<std::size_t>(r)]) = sol(nf + e + r);

    VectorXd grad = prob.Q * x + prob.c;
    if (e > 0) grad.noalias() += prob.A_eq.transpose() * cand.y_eq;
    if (ineq.g_rows() > 0) grad.noalias() += prob.G_in.transpose() * cand.z_in;
    cand.z_lower = VectorXd::Zero(n);
    cand.z_upper = VectorXd::Zero(n);
    for (Index j = 0; j < n; ++j) {
        if (state[static_cast<std::size_t>(j)] == 1) cand.z_lower(j) = grad(j);
        if (state[static_cast<std::size_t>(j)] == 2) cand.z_upper(j) = -grad(j);
    }
    finalize(prob, cand);
    if (!(cand.kkt_residual <= tol)) return false;

    cand.status = SolverStatus::optimal;
    cand.iterations = out.iterations;
    cand.polished = true;
    out = std::move(cand);
    return true;
}

}  // namespace

QuadraticProgram QuadraticProgram::with_objective(MatrixXd q) {
    QuadraticProgram p;
    const Index n = q.rows();
    p.Q = std::move(q);
    p.c = VectorXd::Zero(n);
    p.A_eq.resize(0, n);
    p.b_eq.resize(0);
    p.G_in.resize(0, n);
    p.h_in.resize(0);
    p.lower = VectorXd::Constant(n, -kInf);
    p.upper = VectorXd::Constant(n, kInf);
    return p;
}

std::string_view to_string(SolverStatus status) noexcept {
    switch (status) {
        case SolverStatus::optimal: return "optimal";
        case SolverStatus::max_iterations: return "max_iterations";
        case SolverStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

double KktResiduals::max() const noexcept {
    double worst = 0.0;
    for (const double r : {primal, dual, complementarity, sign}) {
        if (std::isnan(r)) return kInf;
        worst = std::max(worst, r);
    }
    return worst;
}

KktResiduals qp_kkt_residuals(const QuadraticProgram& prob, const SolverSolution& sol) {
    const Index n = prob.size();
    const VectorXd& x = sol.x;
    KktResiduals res;

    VectorXd grad = prob.Q * x + prob.c;
    if (prob.A_eq.rows() > 0) {
        res.primal = std::max(res.primal, inf_norm(prob.A_eq * x - prob.b_eq));
        grad.noalias() += prob.A_eq.transpose() * sol.y_eq;
    }
    if (prob.G_in.rows() > 0) {
        const VectorXd slack = prob.h_in - prob.G_in * x;
        res.primal = std::max(res.primal, std::max(0.0, -slack.minCoeff()));
        res.complementarity = std::max(res.complementarity, inf_norm(sol.z_in.cwiseProduct(slack)));
        res.sign = std::max(res.sign, std::max(0.0, -sol.z_in.minCoeff()));
        grad.noalias() += prob.G_in.transpose() * sol.z_in;
    }
    for (Index j = 0; j < n; ++j) {
        if (std::isfinite(prob.lower(j))) {
            const double slack = x(j) - prob.lower(j);
            res.primal = std::max(res.primal, -slack);
            res.complementarity = std::max(res.complementarity, std::abs(sol.z_lower(j) * slack));
        }
        if (std::isfinite(prob.upper(j))) {
            const double slack = prob.upper(j) - x(j);
            res.primal = std::max(res.primal, -slack);
            res.complementarity = std::max(res.complementarity, std::abs(sol.z_upper(j) * slack));
        }
        res.sign = std::max({res.sign, -sol.z_lower(j), -sol.z_upper(j)});
        grad(j) += sol.z_upper(j) - sol.z_lower(j);
    }
    res.dual = inf_norm(grad) / dual_scale(prob, x);
    return res;
}

SolverSolution solve_qp(const QuadraticProgram& prob, const SolverOptions& options) {
    validate_shapes(prob);
    const Index n = prob.size();
    const Index e = prob.A_eq.rows();

    if (n > 0 && min_eigenvalue(prob.Q) < -kPsdTolerance) {
        throw Error(ErrorCode::not_psd, "quadratic term is not positive semidefinite");
    }

    SolverSolution sol;
    if ((prob.lower.array() > prob.upper.array()).any()) {
        sol.x = VectorXd::Zero(n);
        sol.status = SolverStatus::infeasible;
        return sol;
    }

    const Inequalities ineq(prob);
    const Index m = ineq.size();
    const VectorXd& d = ineq.rhs();
    const int iteration_cap = std::min(options.max_iter, kIpmIterationCap);

    // Initial point: minimizer of 0.5x'Qx + c'x + 0.5|Cx - d|^2 on A x = b,
    // then shifted into the positive orthant.
    VectorXd x(n);
    VectorXd y = VectorXd::Zero(e);
    VectorXd s(m);
    VectorXd z(m);
    NewtonSystem newton;
    {
        MatrixXd k0 = prob.Q;
        ineq.add_weighted_gram(k0, VectorXd::Ones(m));
        if (!newton.factor(std::move(k0), prob.A_eq)) {
            sol.x = VectorXd::Zero(n);
            sol.status = SolverStatus::infeasible;
            return sol;
        }
        VectorXd dy;
        newton.solve(-prob.c + ineq.apply_transpose(d, n), -prob.b_eq, x, dy);
        const VectorXd slack = d - ineq.apply(x);
        if (m > 0) {
            const double shift = -slack.minCoeff();
            s = shift < 0.0 ? slack : (slack.array() + 1.0 + shift).matrix();
            const VectorXd zhat = -slack;
            const double zshift = -zhat.minCoeff();
            z = zshift < 0.0 ? zhat : (zhat.array() + 1.0 + zshift).matrix();
        }
    }

    const double tol_p = 0.1 * options.tol;
    const double tol_d = 0.1 * options.tol;
    const double tol_mu = 1e-4 * options.tol;
    double best_primal = kInf;
    int best_primal_iter = 0;
    bool converged = false;
    bool infeasible = false;
    int it = 0;

    for (; it < iteration_cap; ++it) {
        const VectorXd cx = ineq.apply(x);
        VectorXd r_d = prob.Q * x + prob.c + ineq.apply_transpose(z, n);
        if (e > 0) r_d.noalias() += prob.A_eq.transpose() * y;
        const VectorXd r_p = e > 0 ? VectorXd(prob.A_eq * x - prob.b_eq) : VectorXd();
        const VectorXd r_i = cx + s - d;
        const double mu = m > 0 ? s.dot(z) / static_cast<double>(m) : 0.0;
        const double pres = std::max(inf_norm(r_p), inf_norm(r_i));
        const double dres = inf_norm(r_d) / dual_scale(prob, x);

        if (!std::isfinite(pres) || !std::isfinite(dres) || !(mu < kDivergedMu)) {
            infeasible = true;
            break;
        }
        if (pres <= tol_p && dres <= tol_d && mu <= tol_mu) {
            converged = true;
            break;
        }
        if (pres < 0.5 * best_primal) {
            best_primal = pres;
            best_primal_iter = it;
        } else if (pres > tol_p && it - best_primal_iter > kStagnationWindow) {
            infeasible = true;
            break;
        }

        MatrixXd k = prob.Q;
        const VectorXd w = z.cwiseQuotient(s);
        ineq.add_weighted_gram(k, w);
        if (!newton.factor(std::move(k), prob.A_eq)) {
            infeasible = true;
            break;
        }

        // Shared part of the right-hand side; r_sz enters through -C' S^-1 r_sz.
        auto direction = [&](const VectorXd& r_sz, VectorXd& dx, VectorXd& dy, VectorXd& ds, VectorXd& dz) {
            const VectorXd s_inv_rsz = r_sz.cwiseQuotient(s);
            const VectorXd r1 = -r_d - ineq.apply_transpose(w.cwiseProduct(r_i) - s_inv_rsz, n);
            newton.solve(r1, r_p.size() > 0 ? VectorXd(-r_p) : VectorXd(), dx, dy);
            dz = w.cwiseProduct(ineq.apply(dx) + r_i) - s_inv_rsz;
            ds = -r_i - ineq.apply(dx);
        };

        VectorXd dx, dy, ds, dz;
        const VectorXd sz = s.cwiseProduct(z);
        direction(sz, dx, dy, ds, dz);
        double step = 1.0;
        if (m > 0) {
            const double alpha_aff = std::min(max_step(s, ds), max_step(z, dz));
            const double mu_aff = (s + alpha_aff * ds).dot(z + alpha_aff * dz) / static_cast<double>(m);
            const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
            const VectorXd r_sz = sz + ds.cwiseProduct(dz) - VectorXd::Constant(m, sigma * mu);
            direction(r_sz, dx, dy, ds, dz);
            step = std::min(1.0, kStepFraction * std::min(max_step(s, ds), max_step(z, dz)));
        }

        x += step * dx;
        if (e > 0) y += step * dy;
        if (m > 0) {
            s += step * ds;
            z += step * dz;
        }
        if (options.trace) options.trace({it + 1, pres, dres, mu, step});
    }

    sol.x = x;
    sol.y_eq = y;
    sol.iterations = it;
    ineq.split_multipliers(z, n, sol);
    finalize(prob, sol);

    if (converged && m > 0) polish(prob, ineq, s, z, options.tol, sol);
    if (sol.kkt_residual <= options.tol) {
        sol.status = SolverStatus::optimal;
    } else {
        sol.status = infeasible ? SolverStatus::infeasible : SolverStatus::max_iterations;
    }
    return sol;
}

double log_barrier_residual(const MatrixXd& V, const VectorXd& y, double d) {
    const VectorXd g = V * y - y.cwiseInverse();
    double worst = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
        const double violation = y(i) >= d ? std::max(0.0, g(i)) : std::abs(g(i));
        worst = std::max(worst, violation);
    }
    return worst;
}

SolverSolution solve_box_log_barrier(const MatrixXd& V, double d, const SolverOptions& options) {
    if (!(d > 0.0)) throw Error(ErrorCode::invalid_config, "barrier bound d must be positive");
    if (V.rows() != V.cols()) throw Error(ErrorCode::invalid_config, "covariance must be square");
    const Index n = V.rows();
    if (n == 0 || !(min_eigenvalue(V) > kPsdTolerance)) {
        throw Error(ErrorCode::not_positive_definite, "log-barrier program needs a positive definite covariance");
    }

    SolverSolution sol;
    VectorXd y = VectorXd::Constant(n, std::min(1.0, d / 2.0));
    VectorXd vy = V * y;
    int sweep = 0;
    for (; sweep < options.max_iter; ++sweep) {
        for (Index i = 0; i < n; ++i) {
            const double vii = V(i, i);
            const double r = vy(i) - vii * y(i);
            // Positive root of vii*y^2 + r*y - 1 = 0, in a cancellation-free form.
            const double disc = std::sqrt(r * r + 4.0 * vii);
            double next = r > 0.0 ? 2.0 / (r + disc) : (disc - r) / (2.0 * vii);
            next = std::min(next, d);
            const double delta = next - y(i);
            if (delta != 0.0) {
                vy += delta * V.col(i);
                y(i) = next;
            }
        }
        vy.noalias() = V * y;
        const double residual = log_barrier_residual(V, y, d);
        if (options.trace) options.trace({sweep + 1, 0.0, residual, 0.0, 1.0});
        if (residual <= options.tol) {
            sol.status = SolverStatus::optimal;
            ++sweep;
            break;
        }
    }
    sol.x = y;
    sol.iterations = sweep;
    sol.objective = 0.5 * y.dot(V * y) - y.array().log().sum();
    sol.kkt_residual = log_barrier_residual(V, y, d);
    if (sol.status != SolverStatus::optimal) sol.status = SolverStatus::max_iterations;
    return sol;
}

}  // namespace qdiv
