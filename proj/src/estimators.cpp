#include "surrogate_bridge/estimators.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "surrogate_bridge/errors.hpp"

namespace sbridge {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Index idx(std::size_t i) { return static_cast<Index>(i); }

void require_converged(const FitResult& fit, const char* what) {
    if (!fit.converged) {
        std::ostringstream os;
        os << what << " did not converge after " << fit.iterations << " iterations (gradient norm "
           << fit.final_gradient_norm << ")";
        throw EstimationError(os.str());
    }
}

void check_probability(double p, const char* what, std::size_t row) {
    if (!(p > 0.0 && p < 1.0)) {
        std::ostringstream os;
        os << "positivity violated: " << what << " = " << p << " at row " << row;
        throw PositivityError(os.str());
    }
}

std::vector<std::string> surrogate_names(const AnalysisFrame& f) {
    std::vector<std::string> names{"(intercept)"};
    for (std::size_t j = 0; j < f.surrogate_dim(); ++j) names.push_back("s_" + std::to_string(j + 1));
    for (std::size_t j = 0; j < f.covariate_dim(); ++j) names.push_back("x_" + std::to_string(j + 1));
    return names;
}

std::vector<std::string> covariate_names(const AnalysisFrame& f) {
    std::vector<std::string> names{"(intercept)"};
    for (std::size_t j = 0; j < f.covariate_dim(); ++j) names.push_back("x_" + std::to_string(j + 1));
    return names;
}

}  // namespace

const char* to_string(Method m) { return m == Method::OneStep ? "one-step" : "plug-in"; }

MatrixXd surrogate_design(const AnalysisFrame& f) {
    const Index n = idx(f.rows());
    const Index q = f.s.cols();
    MatrixXd X(n, 1 + q + f.x.cols());
    X.col(0).setOnes();
    X.middleCols(1, q) = f.s;
    X.rightCols(f.x.cols()) = f.x;
    return X;
}

MatrixXd covariate_design(const AnalysisFrame& f) {
    MatrixXd X(idx(f.rows()), 1 + f.x.cols());
    X.col(0).setOnes();
    X.rightCols(f.x.cols()) = f.x;
    return X;
}

Eigen::RowVectorXd surrogate_design_row(const AnalysisFrame& f, std::size_t row) {
    Eigen::RowVectorXd r(1 + f.s.cols() + f.x.cols());
    r[0] = 1.0;
    r.segment(1, f.s.cols()) = f.s.row(idx(row));
    r.tail(f.x.cols()) = f.x.row(idx(row));
    return r;
}

Eigen::RowVectorXd covariate_design_row(const AnalysisFrame& f, std::size_t row) {
    Eigen::RowVectorXd r(1 + f.x.cols());
    r[0] = 1.0;
    r.tail(f.x.cols()) = f.x.row(idx(row));
    return r;
}

double RandomizationModel::probability(const AnalysisFrame& f, std::size_t row, int arm) const {
    double p1 = known_probability;
    if (mode == Mode::Fitted) {
        if (!fit) throw EstimationError("randomization model requested but not fitted");
        p1 = expit(covariate_design_row(f, row).dot(fit->coefficients));
    }
    return arm == 1 ? p1 : 1.0 - p1;
}

std::array<double, 3> MembershipModel::cells(const AnalysisFrame& f, std::size_t row) const {
    const auto design = surrogate_design_row(f, row);
    const double p_rct = expit(design.dot(phase3.coefficients));
    const double p_arm1 = expit(design.dot(arm.coefficients));
    return {1.0 - p_rct, p_rct * (1.0 - p_arm1), p_rct * p_arm1};
}

double NuisanceEstimates::g(const AnalysisFrame& f, std::size_t row) const {
    return expit(surrogate_design_row(f, row).dot(g_fit.coefficients));
}

double NuisanceEstimates::g_star(const AnalysisFrame& f, std::size_t row, int arm) const {
    const double shift = arm == 1 ? bias.u_ct - bias.u_uc : -bias.u_uc;
    return g(f, row) + shift;
}

double NuisanceEstimates::mu(const AnalysisFrame& f, std::size_t row, int arm) const {
    return covariate_design_row(f, row).dot(mu_fit(arm).coefficients);
}

FitResult estimate_g(const AnalysisFrame& f) {
    VectorXd w = VectorXd::Zero(idx(f.rows()));
    for (std::size_t i = 0; i < f.rows(); ++i)
        if (f.z[i] == 1) w[idx(i)] = f.weight[idx(i)];
    return fit_weighted_logistic(surrogate_design(f), f.y, w, {}, surrogate_names(f));
}

VectorXd apply_bias(const VectorXd& g_values, const BiasSpecification& bias, int arm) {
    if (!bias.finite()) throw ValidationError("apply_bias: bias constants must be finite");
    const double shift = arm == 1 ? bias.u_ct - bias.u_uc : -bias.u_uc;
    return (g_values.array() + shift).matrix();
}

VectorXd g_values(const AnalysisFrame& f, const FitResult& g_fit) {
    VectorXd out = VectorXd::Constant(idx(f.rows()), kNaN);
    for (std::size_t i = 0; i < f.rows(); ++i)
        if (f.measured(i)) out[idx(i)] = expit(surrogate_design_row(f, i).dot(g_fit.coefficients));
    return out;
}

FitResult fit_outer_mean(const AnalysisFrame& f, const VectorXd& g_star, int arm) {
    if (g_star.size() != idx(f.rows())) throw ValidationError("fit_outer_mean: g* length mismatch");
    VectorXd w = VectorXd::Zero(idx(f.rows()));
    std::size_t used = 0;
    for (std::size_t i = 0; i < f.rows(); ++i)
        if (f.z[i] == 0 && f.a[i] == arm && f.measured(i)) {
            w[idx(i)] = f.weight[idx(i)];
            ++used;
        }
    if (used == 0)
        throw EstimationError("fit_outer_mean: no measured phase 3 records in arm " + std::to_string(arm));
    return fit_weighted_linear(covariate_design(f), g_star, w, covariate_names(f), AliasPolicy::Drop);
}

double plug_in_estimate(const AnalysisFrame& f, const NuisanceEstimates& nuis, int arm) {
    const auto& gamma = nuis.mu_fit(arm).coefficients;
    if (gamma.size() != f.x.cols() + 1) throw ValidationError("plug_in_estimate: outer mean not fitted");
    double sum = 0.0;
    std::size_t n_rct = 0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
        if (f.z[i] != 0) continue;
        sum += gamma[0] + f.x.row(idx(i)).dot(gamma.tail(f.x.cols()));
        ++n_rct;
    }
    if (n_rct == 0) throw EstimationError("plug_in_estimate: no phase 3 records");
    return sum / static_cast<double>(n_rct);
}

EffectEstimate contrast_effect(double theta0, double theta1, Method method, const BiasSpecification& bias) {
    if (!(theta0 > 0.0) || !(theta1 > 0.0)) {
        std::ostringstream os;
        os << "contrast undefined for nonpositive risks: theta0 = " << theta0 << ", theta1 = " << theta1;
        throw EstimationDomainError(os.str());
    }
    EffectEstimate e;
    e.theta0 = theta0;
    e.theta1 = theta1;
    e.log_one_minus_ve = std::log(theta1 / theta0);
    e.ve = 1.0 - std::exp(e.log_one_minus_ve);
    e.method = method;
    e.bias = bias;
    return e;
}

MembershipModel fit_membership_model(const AnalysisFrame& f) {
    const Index n = idx(f.rows());
    std::array<std::size_t, 3> cell_counts{0, 0, 0};
    VectorXd in_rct(n), w_all = VectorXd::Zero(n), arm_resp(n), w_rct = VectorXd::Zero(n);
    for (std::size_t i = 0; i < f.rows(); ++i) {
        const Index k = idx(i);
        in_rct[k] = f.z[i] == 0 ? 1.0 : 0.0;
        arm_resp[k] = f.a[i];
        if (!f.measured(i)) continue;
        w_all[k] = f.weight[k];
        if (f.z[i] == 0) {
            w_rct[k] = f.weight[k];
            ++cell_counts[1 + static_cast<std::size_t>(f.a[i] == 1)];
        } else {
            ++cell_counts[0];
        }
    }
    for (std::size_t c = 0; c < 3; ++c)
        if (cell_counts[c] == 0)
            throw EstimationError("fit_membership_model: no measured records in membership cell " + std::to_string(c));
    const MatrixXd X = surrogate_design(f);
    MembershipModel m{fit_weighted_logistic(X, in_rct, w_all, {}, surrogate_names(f)),
                      fit_weighted_logistic(X, arm_resp, w_rct, {}, surrogate_names(f))};
    require_converged(m.phase3, "membership model P(Z=0|X,S)");
    require_converged(m.arm, "membership model P(A=1|X,S,Z=0)");
    return m;
}

double eif_complete(const AnalysisFrame& f, std::size_t row, const NuisanceEstimates& nuis, int arm,
                    double theta_arm) {
    if (!f.measured(row)) throw ValidationError("eif_complete: row " + std::to_string(row) + " has no surrogate");
    if (arm != 0 && arm != 1) throw ValidationError("eif_complete: arm must be 0 or 1");
    const double p_z0 = nuis.p_z0;
    check_probability(p_z0, "P(Z=0)", row);
    const double p_arm = nuis.randomization.probability(f, row, arm);
    check_probability(p_arm, "P(A=a|X,Z=0)", row);
    const double g_star = nuis.g_star(f, row, arm);

    double value = 0.0;
    if (f.z[row] == 1) {
        if (!nuis.membership) throw EstimationError("eif_complete: membership model not fitted");
        const auto cells = nuis.membership->cells(f, row);
        const double p_target = cells[1 + static_cast<std::size_t>(arm)];
        check_probability(cells[0], "P(Z=1,A=0|X,S)", row);
        check_probability(p_target, "P(Z=0,A=a|X,S)", row);
        const double untreated = f.a[row] == 0 ? 1.0 : 0.0;
        const double residual = f.y[idx(row)] + arm * nuis.bias.u_ct - nuis.bias.u_uc - g_star;
        value += untreated / (p_z0 * p_arm) * (p_target / cells[0]) * residual;
    } else {
        const double mu = nuis.mu(f, row, arm);
        if (f.a[row] == arm) value += (g_star - mu) / (p_z0 * p_arm);
        value += (mu - theta_arm) / p_z0;
    }
    return value;
}

VectorXd eif_complete_values(const AnalysisFrame& f, const NuisanceEstimates& nuis, int arm, double theta_arm) {
    VectorXd phi = VectorXd::Constant(idx(f.rows()), kNaN);
    for (std::size_t i = 0; i < f.rows(); ++i)
        if (f.measured(i)) phi[idx(i)] = eif_complete(f, i, nuis, arm, theta_arm);
    return phi;
}

VectorXd project_eif(const AnalysisFrame& f, const VectorXd& phi) {
    const Index n = idx(f.rows());
    if (phi.size() != n) throw ValidationError("project_eif: phi length mismatch");
    const Index p = f.x.cols();
    MatrixXd design(n, p + 4);
    VectorXd w = VectorXd::Zero(n);
    std::size_t measured = 0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
        const Index k = idx(i);
        design(k, 0) = 1.0;
        design.block(k, 1, 1, p) = f.x.row(k);
        design(k, p + 1) = f.z[i];
        design(k, p + 2) = f.a[i];
        design(k, p + 3) = f.z[i] == 1 ? f.y[k] : 0.0;
        if (f.measured(i)) {
            w[k] = f.weight[k];
            ++measured;
        }
    }
    if (measured == 0) throw EstimationError("project_eif: no measured records");
    const FitResult proj = fit_weighted_linear(design, phi, w);
    const VectorXd m = design * proj.coefficients;

    VectorXd out(n);
    for (Index k = 0; k < n; ++k) {
        const double ratio = f.weight[k];  // eps / pi
        out[k] = f.eps[static_cast<std::size_t>(k)] ? ratio * phi[k] + (1.0 - ratio) * m[k] : m[k];
    }
    return out;
}

OneStepResult one_step_estimate(const AnalysisFrame& f, const NuisanceEstimates& nuis, int arm) {
    OneStepResult r;
    r.plug_in = plug_in_estimate(f, nuis, arm);
    r.projected_eif = project_eif(f, eif_complete_values(f, nuis, arm, r.plug_in));
    r.theta = r.plug_in + r.projected_eif.mean();
    return r;
}

NuisanceEstimates fit_nuisances(const AnalysisFrame& f, const BiasSpecification& bias, bool with_membership,
                                const RandomizationModel& randomization) {
    if (!bias.finite()) throw ValidationError("bias constants must be finite");
    NuisanceEstimates nuis;
    nuis.bias = bias;
    nuis.g_fit = estimate_g(f);
    require_converged(nuis.g_fit, "g(X,S) logistic regression");
    const VectorXd g = g_values(f, nuis.g_fit);
    nuis.mu0_fit = fit_outer_mean(f, apply_bias(g, bias, 0), 0);
    nuis.mu1_fit = fit_outer_mean(f, apply_bias(g, bias, 1), 1);
    nuis.p_z0 = static_cast<double>(f.n_rct()) / static_cast<double>(f.rows());
    nuis.randomization = randomization;
    if (randomization.mode == RandomizationModel::Mode::Fitted && !randomization.fit) {
        VectorXd w = VectorXd::Zero(idx(f.rows())), resp(idx(f.rows()));
        for (std::size_t i = 0; i < f.rows(); ++i) {
            resp[idx(i)] = f.a[i];
            if (f.z[i] == 0) w[idx(i)] = 1.0;
        }
        nuis.randomization.fit = fit_weighted_logistic(covariate_design(f), resp, w, {}, covariate_names(f));
        require_converged(*nuis.randomization.fit, "randomization model P(A=1|X,Z=0)");
    }
    if (with_membership) nuis.membership = fit_membership_model(f);
    return nuis;
}

PipelineResult estimate_effect(const AnalysisFrame& f, const EstimationOptions& options) {
    PipelineResult r;
    r.nuisances = fit_nuisances(f, options.bias, options.method == Method::OneStep, options.randomization);
    std::array<double, 2> theta{};
    for (int arm = 0; arm < 2; ++arm) {
        const auto a = static_cast<std::size_t>(arm);
        if (options.method == Method::OneStep) {
            auto os = one_step_estimate(f, r.nuisances, arm);
            r.plug_in[a] = os.plug_in;
            theta[a] = os.theta;
            r.projected_eif[a] = std::move(os.projected_eif);
        } else {
            r.plug_in[a] = plug_in_estimate(f, r.nuisances, arm);
            theta[a] = r.plug_in[a];
        }
    }
    r.estimate = contrast_effect(theta[0], theta[1], options.method, options.bias);
    return r;
}

}  // namespace sbridge
