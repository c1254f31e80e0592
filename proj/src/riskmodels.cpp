#include "qdiv/riskmodels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "qdiv/error.hpp"

namespace qdiv {

namespace {

// Constant columns center to exact zeros.
MatrixXd centered(const MatrixXd& x) {
    MatrixXd c = x.rowwise() - x.colwise().mean();
    for (Index j = 0; j < x.cols(); ++j) {
        if (x.col(j).maxCoeff() == x.col(j).minCoeff()) c.col(j).setZero();
    }
    return c;
}

CovarianceModel finish(MatrixXd matrix, RiskModelKind kind) {
    CovarianceModel model;
    model.vols = matrix.diagonal().array().sqrt();
    model.matrix = std::move(matrix);
    model.kind = kind;
    return model;
}

void require_window(const EstimationWindow& window) {
    if (window.length() < 2) {
        throw Error(ErrorCode::out_of_range, "estimation window needs at least two observations");
    }
    if (window.assets() < 1) {
        throw Error(ErrorCode::empty_universe, "estimation window has no assets");
    }
}

}  // namespace

std::string_view to_string(RiskModelKind kind) noexcept {
    switch (kind) {
        case RiskModelKind::single_factor: return "single_factor";
        case RiskModelKind::constant_correlation: return "constant_correlation";
        case RiskModelKind::sample_shrunk: return "sample_shrunk";
    }
    return "unknown";
}

RiskModelKind parse_risk_model(std::string_view text) {
    if (text == "single_factor") return RiskModelKind::single_factor;
    if (text == "constant_correlation") return RiskModelKind::constant_correlation;
    if (text == "sample_shrunk") return RiskModelKind::sample_shrunk;
    throw Error(ErrorCode::invalid_config, "unknown risk model '" + std::string(text) + "'");
}

FactorEstimates estimate_loadings(const EstimationWindow& window) {
    require_window(window);
    const double denom = static_cast<double>(window.length() - 1);

    const VectorXd m = centered(window.market);
    const MatrixXd r = centered(window.returns);

    FactorEstimates est;
    est.sigma2_f = m.squaredNorm() / denom;
    if (!(est.sigma2_f > 0.0)) {
        throw Error(ErrorCode::degenerate_market, "market returns have zero variance in window ending " +
                                                      window.end_date.str());
    }
    est.beta_hat = (r.transpose() * m) / (denom * est.sigma2_f);
    // Centered residuals: the intercept absorbs the means.
    const MatrixXd resid = r - m * est.beta_hat.transpose();
    est.omega2_hat = resid.colwise().squaredNorm().transpose() / denom;
    return est;
}

VectorXd shrink_betas(const VectorXd& beta_hat) {
    return (1.0 - kShrinkWeight) * beta_hat.array() + kShrinkWeight;
}

VectorXd shrink_log_variances(const VectorXd& variances) {
    if (variances.size() == 0) return variances;
    if (!(variances.array() > 0.0).all()) {
        throw Error(ErrorCode::non_positive_variance, "log-variance shrinkage needs strictly positive variances");
    }
    // log-vol = 0.5 * log-variance; the map is linear so we shrink in vol space
    // and square at the end.
    const Eigen::ArrayXd log_vol = 0.5 * variances.array().log();
    const double mean_log_vol = log_vol.mean();
    const Eigen::ArrayXd shrunk = (1.0 - kShrinkWeight) * log_vol + kShrinkWeight * mean_log_vol;
    return (2.0 * shrunk).exp().matrix();
}

CovarianceModel assemble_single_factor(const VectorXd& b, double sigma2_f, const VectorXd& omega2) {
    // Evaluated first so the scalar does not fold into one factor and break symmetry.
    MatrixXd v = b * b.transpose();
    v *= sigma2_f;
    v.diagonal() += omega2;
    return finish(std::move(v), RiskModelKind::single_factor);
}

CovarianceModel assemble_constant_correlation(double rho, const VectorXd& sigma) {
    MatrixXd v = sigma * sigma.transpose();
    v *= rho;
    v.diagonal() = sigma.array().square();
    return finish(std::move(v), RiskModelKind::constant_correlation);
}

CovarianceModel single_factor_cov(const EstimationWindow& window) {
    const FactorEstimates est = estimate_loadings(window);
    const VectorXd floored = est.omega2_hat.cwiseMax(kVarianceFloor);
    return assemble_single_factor(shrink_betas(est.beta_hat), est.sigma2_f, shrink_log_variances(floored));
}

MatrixXd sample_covariance(const MatrixXd& returns) {
    if (returns.rows() < 2) {
        throw Error(ErrorCode::out_of_range, "sample covariance needs at least two observations");
    }
    const MatrixXd x = centered(returns);
    MatrixXd s = (x.transpose() * x) / static_cast<double>(returns.rows() - 1);
    // GEMM may round the two triangles differently.
    s = 0.5 * (s + s.transpose()).eval();
    return s;
}

MatrixXd correlation_from_covariance(const MatrixXd& cov) {
    const VectorXd inv_sd = cov.diagonal().array().sqrt().inverse();
    MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    corr.diagonal().setOnes();
    return corr;
}

double average_correlation(const MatrixXd& cov) {
    const Index n = cov.rows();
    if (n < 2) {
        throw Error(ErrorCode::degenerate_asset, "average correlation needs at least two assets");
    }
    if (!(cov.diagonal().array() > 0.0).all()) {
        throw Error(ErrorCode::degenerate_asset, "an asset has zero sample variance");
    }
    const MatrixXd corr = correlation_from_covariance(cov);
    double sum = 0.0;
    for (Index j = 1; j < n; ++j) sum += corr.col(j).head(j).sum();
    return sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

ConstantCorrelationEstimates estimate_constant_correlation(const EstimationWindow& window) {
    require_window(window);
    const MatrixXd s = sample_covariance(window.returns);
    const Index n = s.rows();
    ConstantCorrelationEstimates est;
    est.rho = average_correlation(s);
    if (est.rho <= -1.0 / static_cast<double>(n - 1) + kPsdTolerance) {
        throw Error(ErrorCode::correlation_out_of_psd_range,
                    "average correlation " + std::to_string(est.rho) + " is at or below -1/(N-1)");
    }
    est.sigma = shrink_log_variances(s.diagonal()).array().sqrt();
    return est;
}

CovarianceModel constant_correlation_cov(const EstimationWindow& window) {
    const auto est = estimate_constant_correlation(window);
    return assemble_constant_correlation(est.rho, est.sigma);
}

MatrixXd constant_correlation_target(const MatrixXd& cov) {
    const double rho = average_correlation(cov);
    const VectorXd sd = cov.diagonal().array().sqrt();
    MatrixXd f = sd * sd.transpose();
    f *= rho;
    f.diagonal() = cov.diagonal();
    return f;
}

double ledoit_wolf_intensity(const MatrixXd& returns) {
    const Index t = returns.rows();
    if (t < 2) {
        throw Error(ErrorCode::out_of_range, "shrinkage intensity needs at least two observations");
    }
    const double tt = static_cast<double>(t);
    const MatrixXd x = centered(returns);
    // Maximum-likelihood moments (1/T), as in the original estimator.
    const MatrixXd s = (x.transpose() * x) / tt;
    const VectorXd var = s.diagonal();
    const MatrixXd f = constant_correlation_target(s);
    const double rbar = average_correlation(s);

    const Eigen::ArrayXXd x2 = x.array().square();
    const MatrixXd pi_mat = (x2.matrix().transpose() * x2.matrix()) / tt - MatrixXd(s.array().square());
    const double pi_hat = pi_mat.sum();

    // theta(i, j) = E[(x_i^2 - s_ii)(x_i x_j - s_ij)]
    const MatrixXd x3 = x.array().cube().matrix();
    const MatrixXd theta = (x3.transpose() * x) / tt - var.asDiagonal() * s;
    const VectorXd sd = var.array().sqrt();
    const MatrixXd ratio = sd.asDiagonal().inverse() * MatrixXd::Ones(s.rows(), s.cols()) * sd.asDiagonal();  // sd_j / sd_i
    MatrixXd off = ratio.cwiseProduct(theta);
    off.diagonal().setZero();
    const double rho_hat = pi_mat.diagonal().sum() + rbar * off.sum();

    const double gamma_hat = (f - s).squaredNorm();
    if (!(gamma_hat > 0.0)) return 1.0;
    const double kappa = (pi_hat - rho_hat) / gamma_hat;
    return std::clamp(kappa / tt, 0.0, 1.0);
}

MatrixXd blend_covariance(const MatrixXd& sample, const MatrixXd& target, double delta) {
    return delta * target + (1.0 - delta) * sample;
}

CovarianceModel sample_cov_shrunk(const EstimationWindow& window, const RiskModelOptions& options) {
    require_window(window);
    const MatrixXd s = sample_covariance(window.returns);
    double delta = 0.0;
    if (options.shrink_delta) {
        delta = *options.shrink_delta;
        if (!(delta >= 0.0 && delta <= 1.0)) {
            throw Error(ErrorCode::invalid_config, "shrink delta must lie in [0, 1]");
        }
    } else if (s.rows() > 1) {
        delta = ledoit_wolf_intensity(window.returns);
    }
    // A single asset has no correlation structure; the target equals S.
    MatrixXd v = delta == 0.0 || s.rows() < 2 ? s : blend_covariance(s, constant_correlation_target(s), delta);
    v.diagonal() = s.diagonal();
    if (!(v.diagonal().array() > 0.0).all()) {
        throw Error(ErrorCode::degenerate_asset, "an asset has zero sample variance");
    }
    CovarianceModel model = finish(std::move(v), RiskModelKind::sample_shrunk);
    model.npd = !(min_eigenvalue(model.matrix) > kPsdTolerance);
    return model;
}

CovarianceModel estimate_covariance(const EstimationWindow& window, RiskModelKind kind,
                                    const RiskModelOptions& options) {
    switch (kind) {
        case RiskModelKind::single_factor: return single_factor_cov(window);
        case RiskModelKind::constant_correlation: return constant_correlation_cov(window);
        case RiskModelKind::sample_shrunk: return sample_cov_shrunk(window, options);
    }
    throw Error(ErrorCode::invalid_config, "unknown risk model");
}

double min_eigenvalue(const MatrixXd& matrix) {
    if (matrix.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(matrix, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

bool validate_psd(const MatrixXd& matrix, double tol) { return min_eigenvalue(matrix) >= -tol; }

bool validate_psd(const CovarianceModel& model, double tol) { return validate_psd(model.matrix, tol); }

}  // namespace qdiv
