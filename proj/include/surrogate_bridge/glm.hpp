#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

namespace sbridge {

enum class Link { Logit, Identity };

struct FitResult {
    Eigen::VectorXd coefficients;  // intercept first when the design has one
    bool converged = false;
    int iterations = 0;
    double final_gradient_norm = 0.0;
    std::vector<std::string> design_column_names;
    Link link = Link::Identity;
    // Columns dropped as linearly dependent on earlier ones; their
    // coefficients are zero. Empty when nothing was dropped.
    std::vector<bool> aliased;

    bool is_aliased(Eigen::Index j) const { return !aliased.empty() && aliased[static_cast<std::size_t>(j)]; }
};

/// Rank-deficient least-squares designs either fail or drop the aliased
/// columns (coefficient fixed at zero).
enum class AliasPolicy { Error, Drop };

struct LogisticOptions {
    // Convergence on the weighted score divided by the total weight, so the
    // criterion is invariant to rescaling the weights.
    double gradient_tolerance = 1e-8;
    int max_iterations = 100;
    // A coefficient vector longer than this with a non-vanishing score is
    // reported as separation.
    double separation_norm = 1e3;
    int max_step_halvings = 30;
};

/// Relative pivot threshold below which a design is declared rank deficient.
inline constexpr double kRankThreshold = 1e-10;

inline double expit(double eta) {
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// IPS-weighted logistic regression by IRLS with step halving on the weighted
/// deviance. Rows with zero weight are ignored. Throws SeparationError,
/// SingularMatrixError or ValidationError; returns `converged == false`
/// (never a silently wrong fit) when the iteration budget runs out.
FitResult fit_weighted_logistic(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                const Eigen::Ref<const Eigen::VectorXd>& response,
                                const Eigen::Ref<const Eigen::VectorXd>& weights,
                                const LogisticOptions& options = {},
                                std::vector<std::string> column_names = {});

/// Weighted least squares through a column-pivoted QR of sqrt(w) X.
FitResult fit_weighted_linear(const Eigen::Ref<const Eigen::MatrixXd>& design,
                              const Eigen::Ref<const Eigen::VectorXd>& response,
                              const Eigen::Ref<const Eigen::VectorXd>& weights,
                              std::vector<std::string> column_names = {},
                              AliasPolicy alias_policy = AliasPolicy::Error);

Eigen::VectorXd predict(const FitResult& fit, const Eigen::Ref<const Eigen::MatrixXd>& design, Link link);

/// Weighted score X^T diag(w) (y - mu) at `beta` for the given link.
Eigen::VectorXd weighted_score(const Eigen::Ref<const Eigen::MatrixXd>& design,
                               const Eigen::Ref<const Eigen::VectorXd>& response,
                               const Eigen::Ref<const Eigen::VectorXd>& weights,
                               const Eigen::Ref<const Eigen::VectorXd>& beta, Link link);

}  // namespace sbridge
