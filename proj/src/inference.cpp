#include "surrogate_bridge/inference.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "surrogate_bridge/errors.hpp"
#include "surrogate_bridge/random.hpp"

namespace sbridge {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t i) { return static_cast<Index>(i); }

struct StratumTally {
    std::array<std::size_t, kStrata> total{};
    std::array<std::size_t, kStrata> measured{};
};

StratumTally tally(const AnalysisFrame& f) {
    StratumTally t;
    for (std::size_t i = 0; i < f.rows(); ++i) {
        const auto s = static_cast<std::size_t>(f.stratum(i));
        ++t.total[s];
        t.measured[s] += f.measured(i);
    }
    return t;
}

}  // namespace

const char* to_string(VarianceReport::Method m) {
    switch (m) {
        case VarianceReport::Method::Sandwich: return "sandwich";
        case VarianceReport::Method::Bootstrap: return "bootstrap";
        case VarianceReport::Method::Eif: return "eif";
    }
    return "?";
}

StackedSystem::StackedSystem(const AnalysisFrame& f, const NuisanceEstimates& nuis, SamplingMode mode)
    : frame_(f), bias_(nuis.bias), mode_(mode) {
    g_design_ = surrogate_design(f);
    v_design_ = covariate_design(f);

    std::vector<double> alpha_values;
    if (mode == SamplingMode::Estimated) {
        const auto t = tally(f);
        for (std::size_t s = 0; s < kStrata; ++s)
            if (t.measured[s] > 0 && t.measured[s] < t.total[s]) {
                alpha_slot_[s] = static_cast<int>(alpha_values.size());
                alpha_values.push_back(
                    logit(static_cast<double>(t.measured[s]) / static_cast<double>(t.total[s])));
            }
    }

    auto& b = blocks_;
    b.n_beta = nuis.g_fit.coefficients.size();
    if (b.n_beta != g_design_.cols() || nuis.mu0_fit.coefficients.size() != v_design_.cols() ||
        nuis.mu1_fit.coefficients.size() != v_design_.cols())
        throw ValidationError("StackedSystem: nuisance fits do not match the frame dimensions");
    std::array<VectorXd, 2> gamma_hat;
    for (int arm = 0; arm < 2; ++arm) {
        const auto& fit = nuis.mu_fit(arm);
        std::vector<Index> kept;
        for (Index j = 0; j < v_design_.cols(); ++j)
            if (!fit.is_aliased(j)) kept.push_back(j);
        auto& va = v_arm_[static_cast<std::size_t>(arm)];
        auto& ga = gamma_hat[static_cast<std::size_t>(arm)];
        va.resize(v_design_.rows(), idx(kept.size()));
        ga.resize(idx(kept.size()));
        for (std::size_t c = 0; c < kept.size(); ++c) {
            va.col(idx(c)) = v_design_.col(kept[c]);
            ga[idx(c)] = fit.coefficients[kept[c]];
        }
    }
    b.n_gamma0 = gamma_hat[0].size();
    b.n_gamma1 = gamma_hat[1].size();
    b.n_alpha = idx(alpha_values.size());
    b.beta = 0;
    b.gamma0 = b.beta + b.n_beta;
    b.gamma1 = b.gamma0 + b.n_gamma0;
    b.alpha = b.gamma1 + b.n_gamma1;
    b.phi0 = b.alpha + b.n_alpha;
    b.phi1 = b.phi0 + 1;
    b.dim = b.phi1 + 1;

    nu_hat_.resize(b.dim);
    nu_hat_.segment(b.beta, b.n_beta) = nuis.g_fit.coefficients;
    nu_hat_.segment(b.gamma0, b.n_gamma0) = gamma_hat[0];
    nu_hat_.segment(b.gamma1, b.n_gamma1) = gamma_hat[1];
    for (Index k = 0; k < b.n_alpha; ++k) nu_hat_[b.alpha + k] = alpha_values[static_cast<std::size_t>(k)];
    nu_hat_[b.phi0] = plug_in_estimate(f, nuis, 0);
    nu_hat_[b.phi1] = plug_in_estimate(f, nuis, 1);
}

MatrixXd StackedSystem::contributions(const VectorXd& nu) const {
    const auto& b = blocks_;
    const auto& f = frame_;
    std::array<double, kStrata> pi_stratum{};
    for (std::size_t s = 0; s < kStrata; ++s)
        if (alpha_slot_[s] >= 0) pi_stratum[s] = expit(nu[b.alpha + alpha_slot_[s]]);

    const auto beta = nu.segment(b.beta, b.n_beta);
    const std::array<VectorXd, 2> gamma{nu.segment(b.gamma0, b.n_gamma0), nu.segment(b.gamma1, b.n_gamma1)};
    const std::array<double, 2> shift{-bias_.u_uc, bias_.u_ct - bias_.u_uc};
    const std::array<Index, 2> gamma_off{b.gamma0, b.gamma1};
    const std::array<Index, 2> phi_off{b.phi0, b.phi1};

    MatrixXd H = MatrixXd::Zero(idx(f.rows()), b.dim);
    for (std::size_t i = 0; i < f.rows(); ++i) {
        const Index k = idx(i);
        const int slot = alpha_slot_[static_cast<std::size_t>(f.stratum(i))];
        const bool measured = f.measured(i);
        if (slot >= 0) H(k, b.alpha + slot) = (measured ? 1.0 : 0.0) - expit(nu[b.alpha + slot]);
        const double w =
            measured ? (slot >= 0 ? 1.0 / pi_stratum[static_cast<std::size_t>(f.stratum(i))] : f.weight[k]) : 0.0;

        if (f.z[i] == 1) {
            if (!measured) continue;
            const double p = expit(g_design_.row(k).dot(beta));
            H.block(k, b.beta, 1, b.n_beta) = (w * (f.y[k] - p)) * g_design_.row(k);
            continue;
        }
        for (std::size_t arm = 0; arm < 2; ++arm) H(k, phi_off[arm]) = v_arm_[arm].row(k).dot(gamma[arm]) - nu[phi_off[arm]];
        if (!measured) continue;
        const auto arm = static_cast<std::size_t>(f.a[i] == 1);
        const double g_star = expit(g_design_.row(k).dot(beta)) + shift[arm];
        const double resid = g_star - v_arm_[arm].row(k).dot(gamma[arm]);
        H.block(k, gamma_off[arm], 1, gamma[arm].size()) = (w * resid) * v_arm_[arm].row(k);
    }
    return H;
}

VectorXd StackedSystem::mean(const VectorXd& nu) const {
    return contributions(nu).colwise().sum().transpose() / static_cast<double>(n());
}

double StackedSystem::step(const VectorXd& nu, Index j) const { return 1e-6 * (1.0 + std::abs(nu[j])); }

VectorXd StackedSystem::difference_column(const VectorXd& nu, Index j) const {
    const double h = step(nu, j);
    VectorXd up = nu, down = nu;
    up[j] += h;
    down[j] -= h;
    return (mean(up) - mean(down)) / (2.0 * h);
}

MatrixXd StackedSystem::jacobian_numeric(const VectorXd& nu) const {
    MatrixXd J(dim(), dim());
    for (Index j = 0; j < dim(); ++j) J.col(j) = difference_column(nu, j);
    return J;
}

MatrixXd StackedSystem::jacobian(const VectorXd& nu) const {
    const auto& b = blocks_;
    const auto& f = frame_;
    // Only the gamma_a columns feed the phi_a rows, and the phi columns only
    // touch their own rows, so columns beta and alpha need differencing.
    MatrixXd J = MatrixXd::Zero(dim(), dim());
    for (Index j = b.beta; j < b.beta + b.n_beta; ++j) J.col(j) = difference_column(nu, j);
    for (Index j = b.alpha; j < b.alpha + b.n_alpha; ++j) J.col(j) = difference_column(nu, j);

    std::array<double, kStrata> pi_stratum{};
    for (std::size_t s = 0; s < kStrata; ++s)
        if (alpha_slot_[s] >= 0) pi_stratum[s] = expit(nu[b.alpha + alpha_slot_[s]]);
    const auto beta = nu.segment(b.beta, b.n_beta);

    MatrixXd jbb = MatrixXd::Zero(b.n_beta, b.n_beta);
    std::array<MatrixXd, 2> jgg{MatrixXd::Zero(b.n_gamma0, b.n_gamma0), MatrixXd::Zero(b.n_gamma1, b.n_gamma1)};
    std::array<VectorXd, 2> v_sum{VectorXd::Zero(b.n_gamma0), VectorXd::Zero(b.n_gamma1)};
    double n_rct = 0.0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
        const Index k = idx(i);
        if (f.z[i] == 0) {
            n_rct += 1.0;
            v_sum[0] += v_arm_[0].row(k).transpose();
            v_sum[1] += v_arm_[1].row(k).transpose();
        }
        if (!f.measured(i)) continue;
        const int slot = alpha_slot_[static_cast<std::size_t>(f.stratum(i))];
        const double w = slot >= 0 ? 1.0 / pi_stratum[static_cast<std::size_t>(f.stratum(i))] : f.weight[k];
        if (f.z[i] == 1) {
            const double p = expit(g_design_.row(k).dot(beta));
            jbb.noalias() -= (w * p * (1.0 - p)) * g_design_.row(k).transpose() * g_design_.row(k);
        } else {
            const auto arm = static_cast<std::size_t>(f.a[i] == 1);
            jgg[arm].noalias() -= w * v_arm_[arm].row(k).transpose() * v_arm_[arm].row(k);
        }
    }
    const double n_total = static_cast<double>(n());
    J.block(b.beta, b.beta, b.n_beta, b.n_beta) = jbb / n_total;
    J.block(b.gamma0, b.gamma0, b.n_gamma0, b.n_gamma0) = jgg[0] / n_total;
    J.block(b.gamma1, b.gamma1, b.n_gamma1, b.n_gamma1) = jgg[1] / n_total;
    J.block(b.phi0, b.gamma0, 1, b.n_gamma0) = v_sum[0].transpose() / n_total;
    J.block(b.phi1, b.gamma1, 1, b.n_gamma1) = v_sum[1].transpose() / n_total;
    J(b.phi0, b.phi0) = -n_rct / n_total;
    J(b.phi1, b.phi1) = -n_rct / n_total;
    // The alpha rows depend on alpha alone: diagonal -(n_s / n) p (1 - p).
    if (b.n_alpha > 0) {
        J.block(b.alpha, 0, b.n_alpha, dim()).setZero();
        const auto t = tally(f);
        for (std::size_t s = 0; s < kStrata; ++s) {
            if (alpha_slot_[s] < 0) continue;
            const Index r = b.alpha + alpha_slot_[s];
            J(r, r) = -static_cast<double>(t.total[s]) * pi_stratum[s] * (1.0 - pi_stratum[s]) / n_total;
        }
    }
    return J;
}

namespace {

AnalysisFrame with_empirical_fractions(const AnalysisFrame& f) {
    const auto t = tally(f);
    AnalysisFrame out = f;
    for (std::size_t i = 0; i < f.rows(); ++i) {
        const auto s = static_cast<std::size_t>(f.stratum(i));
        if (t.measured[s] == 0) continue;
        const double pi = static_cast<double>(t.measured[s]) / static_cast<double>(t.total[s]);
        out.pi[idx(i)] = pi;
        out.weight[idx(i)] = f.measured(i) ? 1.0 / pi : 0.0;
    }
    return out;
}

}  // namespace

double delta_se_log_ratio(const Eigen::Matrix2d& cov, double theta0, double theta1) {
    const Eigen::Vector2d grad(-1.0 / theta0, 1.0 / theta1);
    return std::sqrt(std::max(0.0, grad.dot(cov * grad)));
}

VarianceReport sandwich_variance(const AnalysisFrame& f, const NuisanceEstimates& nuis,
                                 const SandwichOptions& options) {
    std::optional<AnalysisFrame> refit_frame;
    std::optional<NuisanceEstimates> refit_nuis;
    const AnalysisFrame* frame = &f;
    const NuisanceEstimates* fitted = &nuis;
    if (options.sampling == SamplingMode::Estimated) {
        refit_frame = with_empirical_fractions(f);
        refit_nuis = fit_nuisances(*refit_frame, nuis.bias, false, nuis.randomization);
        frame = &*refit_frame;
        fitted = &*refit_nuis;
    }
    if (!fitted->g_fit.converged || !fitted->mu0_fit.converged || !fitted->mu1_fit.converged)
        throw EstimationError("sandwich_variance: nuisance fits have not converged");

    const StackedSystem system(*frame, *fitted, options.sampling);
    const auto& b = system.blocks();
    const VectorXd& nu = system.estimate();
    const double n = static_cast<double>(system.n());

    const VectorXd at_root = system.mean(nu);
    if (at_root.norm() > 1e-6) {
        std::ostringstream os;
        os << "sandwich_variance: stacked estimating function is not at its root (norm " << at_root.norm()
           << "); were the nuisances fitted on this frame?";
        throw EstimationError(os.str());
    }

    const MatrixXd J =
        options.jacobian == JacobianMode::Numeric ? system.jacobian_numeric(nu) : system.jacobian(nu);
    if (!J.allFinite()) throw EstimationError("sandwich_variance: non-finite derivative entries");
    const MatrixXd W = -J;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(W);
    qr.setThreshold(kRankThreshold);
    if (qr.rank() < W.rows())
        throw SingularMatrixError("sandwich_variance: W_n is singular (rank " + std::to_string(qr.rank()) + " < " +
                                  std::to_string(W.rows()) + ")");
    const MatrixXd W_inv = qr.inverse();

    const MatrixXd H = system.contributions(nu);
    const MatrixXd Q = (H.transpose() * H) / n;
    MatrixXd V = W_inv * Q * W_inv.transpose();
    V = 0.5 * (V + V.transpose()).eval();

    VarianceReport rep;
    rep.method = VarianceReport::Method::Sandwich;
    rep.cov_theta << V(b.phi0, b.phi0), V(b.phi0, b.phi1), V(b.phi1, b.phi0), V(b.phi1, b.phi1);
    rep.cov_theta /= n;
    rep.se_theta0 = std::sqrt(std::max(0.0, rep.cov_theta(0, 0)));
    rep.se_theta1 = std::sqrt(std::max(0.0, rep.cov_theta(1, 1)));
    rep.se_log_one_minus_ve = delta_se_log_ratio(rep.cov_theta, nu[b.phi0], nu[b.phi1]);
    rep.v_n = std::move(V);
    return rep;
}

VarianceReport stratified_bootstrap(const AnalysisFrame& f, const EstimatePipeline& pipeline,
                                    const BootstrapOptions& options) {
    if (options.replicates < 2) throw ValidationError("stratified_bootstrap: need at least 2 replicates");
    std::array<std::vector<std::size_t>, kStrata> strata;
    for (std::size_t i = 0; i < f.rows(); ++i) strata[static_cast<std::size_t>(f.stratum(i))].push_back(i);
    // Canonical order within each stratum, so resamples do not depend on the
    // order of the input records.
    auto key = [&](std::size_t i) {
        std::vector<double> k{f.weight[idx(i)], f.measured(i) ? 1.0 : 0.0};
        for (Index c = 0; c < f.x.cols(); ++c) k.push_back(f.x(idx(i), c));
        for (Index c = 0; c < f.s.cols(); ++c) k.push_back(f.measured(i) ? f.s(idx(i), c) : 0.0);
        k.push_back(f.z[i] == 1 ? f.y[idx(i)] : 0.0);
        return k;
    };
    for (auto& stratum : strata) {
        std::vector<std::pair<std::vector<double>, std::size_t>> keyed;
        keyed.reserve(stratum.size());
        for (auto i : stratum) keyed.emplace_back(key(i), i);
        std::stable_sort(keyed.begin(), keyed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t k = 0; k < keyed.size(); ++k) stratum[k] = keyed[k].second;
    }
    if (strata[0].empty() || strata[1].empty() || strata[2].empty() || strata[3].empty())
        throw ValidationError("stratified_bootstrap: every stratum (cases, controls, arm 0, arm 1) must be nonempty");

    const std::size_t B = options.replicates;
    std::vector<std::optional<std::array<double, 2>>> results(B);

    auto run_one = [&](std::size_t rep) {
        auto rng = make_stream(options.seed, {kStreamBootstrap, rep});
        std::vector<std::size_t> rows;
        rows.reserve(f.rows());
        for (const auto& stratum : strata) {
            std::uniform_int_distribution<std::size_t> pick(0, stratum.size() - 1);
            for (std::size_t k = 0; k < stratum.size(); ++k) rows.push_back(stratum[pick(rng)]);
        }
        try {
            const auto theta = pipeline(f.take(rows));
            if (theta[0] > 0.0 && theta[1] > 0.0 && std::isfinite(theta[0]) && std::isfinite(theta[1]))
                results[rep] = theta;
        } catch (const EstimationError&) {
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(B)));
    if (threads == 1) {
        for (std::size_t r = 0; r < B; ++r) run_one(r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t r = next++; r < B; r = next++) run_one(r);
            });
    }

    std::vector<Eigen::Vector3d> ok;
    for (const auto& r : results)
        if (r) ok.emplace_back((*r)[0], (*r)[1], std::log((*r)[1] / (*r)[0]));
    VarianceReport rep;
    rep.method = VarianceReport::Method::Bootstrap;
    rep.b_reps = B;
    rep.discarded_resamples = B - ok.size();
    if (static_cast<double>(rep.discarded_resamples) > options.max_discard_fraction * static_cast<double>(B) ||
        ok.size() < 2) {
        std::ostringstream os;
        os << "stratified_bootstrap: " << rep.discarded_resamples << " of " << B
           << " resamples failed (unstable resampling)";
        throw EstimationError(os.str());
    }
    // Shifted by the first resample so identical estimates give exactly zero.
    const Eigen::Vector3d shift = ok.front();
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (const auto& v : ok) m += v - shift;
    m /= static_cast<double>(ok.size());
    Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
    for (const auto& v : ok) c += (v - shift - m) * (v - shift - m).transpose();
    c /= static_cast<double>(ok.size() - 1);
    rep.cov_theta = c.topLeftCorner<2, 2>();
    rep.se_theta0 = std::sqrt(c(0, 0));
    rep.se_theta1 = std::sqrt(c(1, 1));
    rep.se_log_one_minus_ve = std::sqrt(c(2, 2));
    return rep;
}

double eif_variance(const VectorXd& values) {
    if (values.size() < 2) throw ValidationError("eif_variance: need at least 2 values");
    const double m = values.mean();
    return (values.array() - m).square().mean() / static_cast<double>(values.size());
}

VarianceReport eif_variance_report(const VectorXd& eif0, const VectorXd& eif1, double theta0, double theta1) {
    if (eif0.size() != eif1.size()) throw ValidationError("eif_variance_report: length mismatch");
    const double n = static_cast<double>(eif0.size());
    const VectorXd c0 = (eif0.array() - eif0.mean()).matrix();
    const VectorXd c1 = (eif1.array() - eif1.mean()).matrix();
    VarianceReport rep;
    rep.method = VarianceReport::Method::Eif;
    rep.cov_theta << eif_variance(eif0), c0.dot(c1) / (n * n), c0.dot(c1) / (n * n), eif_variance(eif1);
    rep.se_theta0 = std::sqrt(rep.cov_theta(0, 0));
    rep.se_theta1 = std::sqrt(rep.cov_theta(1, 1));
    rep.se_log_one_minus_ve = delta_se_log_ratio(rep.cov_theta, theta0, theta1);
    return rep;
}

double normal_critical_value(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0,1)");
    return boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
}

Interval wald_interval(double estimate, double se, double level) {
    if (!(se >= 0.0)) throw ValidationError("standard error must be nonnegative");
    const double z = normal_critical_value(level);
    return {estimate - z * se, estimate + z * se};
}

Interval wald_interval_ve(const EffectEstimate& estimate, double se_log, double level) {
    const auto log_ci = wald_interval(estimate.log_one_minus_ve, se_log, level);
    return {1.0 - std::exp(log_ci.upper), 1.0 - std::exp(log_ci.lower)};
}

}  // namespace sbridge
