#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>

#include "surrogate_bridge/estimators.hpp"
#include "surrogate_bridge/frame.hpp"

namespace sbridge {

/// How the sampling probabilities enter the stacked system: fixed at the
/// design values (no alpha block), or estimated by a saturated logistic
/// model over the design strata that are only partly measured.
enum class SamplingMode { Known, Estimated };

/// Stacked estimating functions for the plug-in estimator:
/// nu = (beta, gamma0, gamma1, alpha, phi0, phi1), with
///   h_g     = Z eps x~ (Y - expit(x~'beta)) / pi
///   h_mu_a  = (1-Z) 1[A=a] eps v (g*_a(beta) - v'gamma_a) / pi
///   h_pi    = 1[stratum = s] (eps - expit(alpha_s))   (Estimated only)
///   h_phi_a = (1-Z) (v'gamma_a - phi_a)
/// where x~ = (1, S, X) and v = (1, X). Columns of v aliased in an arm's
/// outer-mean fit are left out of that arm's gamma block.
class StackedSystem {
   public:
    struct Blocks {
        Eigen::Index beta = 0, gamma0 = 0, gamma1 = 0, alpha = 0, phi0 = 0, phi1 = 0;
        Eigen::Index n_beta = 0, n_gamma0 = 0, n_gamma1 = 0, n_alpha = 0;
        Eigen::Index dim = 0;
    };

    /// `nuis` must have been fitted on `f` (with the frame's weights when
    /// `mode` is Known, with the empirical stratum fractions when Estimated).
    StackedSystem(const AnalysisFrame& f, const NuisanceEstimates& nuis, SamplingMode mode);

    const Blocks& blocks() const { return blocks_; }
    Eigen::Index dim() const { return blocks_.dim; }
    std::size_t n() const { return frame_.rows(); }
    const Eigen::VectorXd& estimate() const { return nu_hat_; }

    /// Per-record stacked function, one row per record.
    Eigen::MatrixXd contributions(const Eigen::VectorXd& nu) const;
    /// (1/n) sum of the per-record stacked function.
    Eigen::VectorXd mean(const Eigen::VectorXd& nu) const;
    /// d mean / d nu with analytic diagonal blocks and central differences
    /// for the cross-block entries.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& nu) const;
    /// d mean / d nu entirely by central differences (oracle).
    Eigen::MatrixXd jacobian_numeric(const Eigen::VectorXd& nu) const;

   private:
    double step(const Eigen::VectorXd& nu, Eigen::Index j) const;
    Eigen::VectorXd difference_column(const Eigen::VectorXd& nu, Eigen::Index j) const;

    const AnalysisFrame& frame_;
    BiasSpecification bias_;
    SamplingMode mode_;
    Blocks blocks_;
    Eigen::VectorXd nu_hat_;
    std::array<int, kStrata> alpha_slot_{-1, -1, -1, -1};  // stratum -> alpha index, -1 when fixed
    Eigen::MatrixXd g_design_;
    Eigen::MatrixXd v_design_;
    std::array<Eigen::MatrixXd, 2> v_arm_;  // v restricted to each arm's non-aliased columns
};

struct VarianceReport {
    enum class Method { Sandwich, Bootstrap, Eif };

    double se_theta0 = 0.0;
    double se_theta1 = 0.0;
    double se_log_one_minus_ve = 0.0;
    Eigen::Matrix2d cov_theta = Eigen::Matrix2d::Zero();
    Method method = Method::Sandwich;
    std::size_t b_reps = 0;
    std::size_t discarded_resamples = 0;
    Eigen::MatrixXd v_n;  // sandwich only: full V_n for nu
};

const char* to_string(VarianceReport::Method m);

enum class JacobianMode { Hybrid, Numeric };

struct SandwichOptions {
    SamplingMode sampling = SamplingMode::Known;
    JacobianMode jacobian = JacobianMode::Hybrid;
};

/// V_n = W^-1 Q W^-T with W = -(1/n) sum h', Q = (1/n) sum h h'. Plug-in
/// estimator only. In Estimated mode the nuisances are refitted with the
/// empirical stratum sampling fractions before the system is built.
VarianceReport sandwich_variance(const AnalysisFrame& f, const NuisanceEstimates& nuis,
                                 const SandwichOptions& options = {});

/// (theta0, theta1) from a full estimation run on a (resampled) frame.
using EstimatePipeline = std::function<std::array<double, 2>(const AnalysisFrame&)>;

struct BootstrapOptions {
    std::size_t replicates = 500;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    double max_discard_fraction = 0.10;
};

/// Resamples with replacement within observational cases, observational
/// controls and each phase 3 arm at their original sizes and reruns
/// `pipeline`. Replicates that fail with an EstimationError are discarded
/// and counted; more than `max_discard_fraction` discarded is an error.
VarianceReport stratified_bootstrap(const AnalysisFrame& f, const EstimatePipeline& pipeline,
                                    const BootstrapOptions& options);

/// Population variance of the influence values divided by their count.
double eif_variance(const Eigen::VectorXd& values);

/// Influence-function variance for the one-step estimator of both arms.
VarianceReport eif_variance_report(const Eigen::VectorXd& eif0, const Eigen::VectorXd& eif1, double theta0,
                                   double theta1);

/// Standard error of log(theta1/theta0) from the covariance of (theta0, theta1).
double delta_se_log_ratio(const Eigen::Matrix2d& cov, double theta0, double theta1);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    bool contains(double v) const { return lower <= v && v <= upper; }
};

/// Two-sided standard normal critical value for `level`.
double normal_critical_value(double level);

/// Wald interval on the estimate's own scale.
Interval wald_interval(double estimate, double se, double level = 0.95);

/// Wald interval on log(1 - VE) mapped back through 1 - exp(.), returned
/// ordered.
Interval wald_interval_ve(const EffectEstimate& estimate, double se_log, double level = 0.95);

}  // namespace sbridge
