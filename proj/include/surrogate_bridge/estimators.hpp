#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>

#include "surrogate_bridge/frame.hpp"
#include "surrogate_bridge/glm.hpp"

namespace sbridge {

/// Constant bias pair in risk-difference units.
///
/// u_uc: untreated-to-control transport bias (observational vs phase 3
/// untreated risk at fixed X, S). u_ct: control-to-treated bias (surrogate
/// imperfection); a positive value raises the arm-1 risk and lowers TE.
struct BiasSpecification {
    double u_uc = 0.0;
    double u_ct = 0.0;

    bool conservative() const { return u_ct >= 0.0; }
    bool finite() const { return std::isfinite(u_uc) && std::isfinite(u_ct); }
    bool operator==(const BiasSpecification&) const = default;
};

enum class Method { PlugIn, OneStep };

const char* to_string(Method m);

/// P(A = 1 | X, Z = 0): the known randomization constant, or a logistic fit
/// of A on (1, X) over all phase 3 records.
struct RandomizationModel {
    enum class Mode { Known, Fitted };
    Mode mode = Mode::Known;
    double known_probability = 0.5;
    std::optional<FitResult> fit;

    double probability(const AnalysisFrame& f, std::size_t row, int arm) const;
};

/// Three-cell membership P(Z=1,A=0 | X,S), P(Z=0,A=0 | X,S), P(Z=0,A=1 | X,S),
/// factored as P(Z=0 | X,S) times P(A=1 | X,S,Z=0).
struct MembershipModel {
    FitResult phase3;  // logistic of 1[Z=0] on (1, S, X) over measured records
    FitResult arm;     // logistic of A on (1, S, X) over measured phase 3 records

    /// {P(Z=1,A=0), P(Z=0,A=0), P(Z=0,A=1)} at a measured row.
    std::array<double, 3> cells(const AnalysisFrame& f, std::size_t row) const;
};

struct NuisanceEstimates {
    FitResult g_fit;
    FitResult mu0_fit;
    FitResult mu1_fit;
    BiasSpecification bias;
    double p_z0 = 0.0;
    RandomizationModel randomization;
    std::optional<MembershipModel> membership;

    const FitResult& mu_fit(int arm) const { return arm == 1 ? mu1_fit : mu0_fit; }
    double g(const AnalysisFrame& f, std::size_t row) const;
    double g_star(const AnalysisFrame& f, std::size_t row, int arm) const;
    double mu(const AnalysisFrame& f, std::size_t row, int arm) const;
};

struct EffectEstimate {
    double theta0 = 0.0;
    double theta1 = 0.0;
    double log_one_minus_ve = 0.0;
    double ve = 0.0;
    Method method = Method::PlugIn;
    BiasSpecification bias;
};

// Design builders: (1, S, X) for g and membership, (1, X) for outer means.
Eigen::MatrixXd surrogate_design(const AnalysisFrame& f);
Eigen::MatrixXd covariate_design(const AnalysisFrame& f);
Eigen::RowVectorXd surrogate_design_row(const AnalysisFrame& f, std::size_t row);
Eigen::RowVectorXd covariate_design_row(const AnalysisFrame& f, std::size_t row);

/// IPS-weighted logistic fit of Y on (1, S, X) over measured observational
/// records.
FitResult estimate_g(const AnalysisFrame& f);

/// g*_0 = g - u_uc and g*_1 = g + u_ct - u_uc, elementwise.
Eigen::VectorXd apply_bias(const Eigen::VectorXd& g_values, const BiasSpecification& bias, int arm);

/// Fitted g on every measured row (NaN elsewhere).
Eigen::VectorXd g_values(const AnalysisFrame& f, const FitResult& g_fit);

/// IPS-weighted linear regression of g*_arm on (1, X) over measured phase 3
/// records in `arm`. `g_star` is indexed by frame row.
FitResult fit_outer_mean(const AnalysisFrame& f, const Eigen::VectorXd& g_star, int arm);

/// Average of the fitted outer mean over every phase 3 record (both arms).
double plug_in_estimate(const AnalysisFrame& f, const NuisanceEstimates& nuis, int arm);

/// log(1 - VE) = log(theta1 / theta0); throws EstimationDomainError unless
/// both risks are positive.
EffectEstimate contrast_effect(double theta0, double theta1, Method method = Method::PlugIn,
                               const BiasSpecification& bias = {});

MembershipModel fit_membership_model(const AnalysisFrame& f);

/// Complete-data efficient influence function of theta_arm at a measured row.
double eif_complete(const AnalysisFrame& f, std::size_t row, const NuisanceEstimates& nuis, int arm,
                    double theta_arm);

/// Complete-data EIF on every measured row (NaN elsewhere).
Eigen::VectorXd eif_complete_values(const AnalysisFrame& f, const NuisanceEstimates& nuis, int arm,
                                    double theta_arm);

/// Missing-surrogate EIF: eps/pi * phi + (1 - eps/pi) * m, with m the
/// IPS-weighted linear projection of phi on (1, X, Z, A, Z*Y) fitted among
/// measured rows.
Eigen::VectorXd project_eif(const AnalysisFrame& f, const Eigen::VectorXd& phi);

struct OneStepResult {
    double theta = 0.0;
    double plug_in = 0.0;
    Eigen::VectorXd projected_eif;
};

OneStepResult one_step_estimate(const AnalysisFrame& f, const NuisanceEstimates& nuis, int arm);

struct EstimationOptions {
    Method method = Method::PlugIn;
    BiasSpecification bias;
    RandomizationModel randomization;
};

/// Fits g, the outer means and (when `with_membership`) the EIF nuisances.
NuisanceEstimates fit_nuisances(const AnalysisFrame& f, const BiasSpecification& bias, bool with_membership,
                                const RandomizationModel& randomization = {});

struct PipelineResult {
    EffectEstimate estimate;
    NuisanceEstimates nuisances;
    std::array<double, 2> plug_in{0.0, 0.0};
    // Projected EIF per arm, filled by the one-step method only.
    std::array<Eigen::VectorXd, 2> projected_eif;
};

PipelineResult estimate_effect(const AnalysisFrame& f, const EstimationOptions& options);

}  // namespace sbridge
