#pragma once

#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "qdiv/panel.hpp"

namespace qdiv {

enum class RiskModelKind { single_factor, constant_correlation, sample_shrunk };

std::string_view to_string(RiskModelKind kind) noexcept;
RiskModelKind parse_risk_model(std::string_view text);

/// Raw single-factor regression estimates for one window.
struct FactorEstimates {
    VectorXd beta_hat;    // N
    VectorXd omega2_hat;  // N, residual variances, >= 0
    double sigma2_f = 0;  // market variance, > 0
};

struct ConstantCorrelationEstimates {
    double rho = 0;  // average pairwise sample correlation
    VectorXd sigma;  // shrunk volatilities
};

struct CovarianceModel {
    MatrixXd matrix;  // N x N, symmetric
    VectorXd vols;    // sqrt of the diagonal
    RiskModelKind kind = RiskModelKind::single_factor;
    /// Set when the smallest eigenvalue is not above the PSD tolerance. Only
    /// the shrunk sample estimator can produce such a matrix.
    bool npd = false;
};

struct RiskModelOptions {
    /// Fixed blend weight on the structured target for sample_shrunk. When
    /// unset the Ledoit-Wolf intensity is estimated from the window.
    std::optional<double> shrink_delta;
};

inline constexpr double kShrinkWeight = 1.0 / 3.0;
inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kPsdTolerance = 1e-10;

/// Market-model regressions in matrix form: beta = cov(r, m) / var(m),
/// residual variance about the fitted line (intercept included), all with
/// the W-1 denominator.
FactorEstimates estimate_loadings(const EstimationWindow& window);

/// beta := 2/3 * beta_hat + 1/3.
VectorXd shrink_betas(const VectorXd& beta_hat);

/// Pulls log standard deviations one third of the way toward their
/// cross-sectional mean and returns the resulting variances. Inputs must be
/// strictly positive.
VectorXd shrink_log_variances(const VectorXd& variances);

/// sigma2_f * b b' + diag(omega2).
CovarianceModel assemble_single_factor(const VectorXd& b, double sigma2_f, const VectorXd& omega2);

/// rho * sigma sigma' + (1 - rho) diag(sigma)^2.
CovarianceModel assemble_constant_correlation(double rho, const VectorXd& sigma);

CovarianceModel single_factor_cov(const EstimationWindow& window);

ConstantCorrelationEstimates estimate_constant_correlation(const EstimationWindow& window);
CovarianceModel constant_correlation_cov(const EstimationWindow& window);

/// Unbiased (W-1) sample covariance of the columns.
MatrixXd sample_covariance(const MatrixXd& returns);

/// Correlation matrix implied by a covariance matrix.
MatrixXd correlation_from_covariance(const MatrixXd& cov);

/// Mean of the strictly-upper-triangular correlations.
double average_correlation(const MatrixXd& cov);

/// Constant-correlation matrix sharing `cov`'s variances and average
/// correlation.
MatrixXd constant_correlation_target(const MatrixXd& cov);

/// Ledoit-Wolf (2004) optimal intensity toward the constant-correlation
/// target, clamped to [0, 1].
double ledoit_wolf_intensity(const MatrixXd& returns);

/// delta * target + (1 - delta) * sample.
MatrixXd blend_covariance(const MatrixXd& sample, const MatrixXd& target, double delta);

CovarianceModel sample_cov_shrunk(const EstimationWindow& window, const RiskModelOptions& options = {});

CovarianceModel estimate_covariance(const EstimationWindow& window, RiskModelKind kind,
                                    const RiskModelOptions& options = {});

double min_eigenvalue(const MatrixXd& matrix);

/// True iff the smallest eigenvalue is >= -tol.
bool validate_psd(const MatrixXd& matrix, double tol = kPsdTolerance);
bool validate_psd(const CovarianceModel& model, double tol = kPsdTolerance);

}  // namespace qdiv
