#include "surrogate_bridge/glm.hpp"

#include <cmath>
#include <sstream>

#include "surrogate_bridge/errors.hpp"

namespace sbridge {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_shapes(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                  const Eigen::Ref<const VectorXd>& w) {
    if (X.rows() != y.size() || X.rows() != w.size())
        throw ValidationError("glm: design, response and weights disagree in length");
    if (X.cols() == 0) throw ValidationError("glm: empty design");
    for (Index i = 0; i < w.size(); ++i)
        if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw ValidationError("glm: weights must be finite and nonnegative");
}

// Positive-weight rows only; zero-weight rows may carry NaN placeholders.
std::vector<Index> active_rows(const Eigen::Ref<const VectorXd>& w) {
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(w.size()));
    for (Index i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) rows.push_back(i);
    return rows;
}

// log(1 + exp(eta)) without overflow.
double log1pexp(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double deviance(const MatrixXd& X, const VectorXd& y, const VectorXd& w, const VectorXd& beta) {
    const VectorXd eta = X * beta;
    double dev = 0.0;
    for (Index i = 0; i < eta.size(); ++i) dev += w[i] * (log1pexp(eta[i]) - y[i] * eta[i]);
    return 2.0 * dev;
}

std::string singular_message(const char* what, Index rank, Index p) {
    std::ostringstream os;
    os << what << ": rank " << rank << " < " << p << " columns (relative pivot threshold " << kRankThreshold << ")";
    return os.str();
}

}  // namespace

Eigen::VectorXd weighted_score(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                               const Eigen::Ref<const VectorXd>& w, const Eigen::Ref<const VectorXd>& beta,
                               Link link) {
    VectorXd score = VectorXd::Zero(X.cols());
    for (Index i = 0; i < X.rows(); ++i) {
        if (w[i] == 0.0) continue;
        const double eta = X.row(i).dot(beta);
        const double mu = link == Link::Logit ? expit(eta) : eta;
        score.noalias() += w[i] * (y[i] - mu) * X.row(i).transpose();
    }
    return score;
}

FitResult fit_weighted_logistic(const Eigen::Ref<const MatrixXd>& design, const Eigen::Ref<const VectorXd>& response,
                                const Eigen::Ref<const VectorXd>& weights, const LogisticOptions& options,
                                std::vector<std::string> column_names) {
    check_shapes(design, response, weights);
    const auto rows = active_rows(weights);
    const Index n = static_cast<Index>(rows.size());
    const Index p = design.cols();

    MatrixXd X(n, p);
    VectorXd y(n), w(n);
    double w_pos = 0.0, w_neg = 0.0;
    for (Index k = 0; k < n; ++k) {
        const Index i = rows[static_cast<std::size_t>(k)];
        X.row(k) = design.row(i);
        y[k] = response[i];
        w[k] = weights[i];
        if (y[k] == 1.0) w_pos += w[k];
        else if (y[k] == 0.0) w_neg += w[k];
        else throw ValidationError("fit_weighted_logistic: response must be binary");
    }
    if (!X.allFinite()) throw ValidationError("fit_weighted_logistic: non-finite design entry on a positive-weight row");
    if (w_pos == 0.0 || w_neg == 0.0)
        throw EstimationError("fit_weighted_logistic: need positive-weight records in both response classes");
    const double w_total = w_pos + w_neg;

    {
        const MatrixXd Xw = w.cwiseSqrt().asDiagonal() * X;
        Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
        qr.setThreshold(kRankThreshold);
        if (qr.rank() < p) throw SingularMatrixError(singular_message("fit_weighted_logistic", qr.rank(), p));
    }

    FitResult fit;
    fit.link = Link::Logit;
    fit.design_column_names = std::move(column_names);
    VectorXd beta = VectorXd::Zero(p);
    double dev = deviance(X, y, w, beta);

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        const VectorXd eta = X * beta;
        VectorXd mu(n), info_w(n);
        for (Index i = 0; i < n; ++i) {
            mu[i] = expit(eta[i]);
            info_w[i] = w[i] * mu[i] * (1.0 - mu[i]);
        }
        const VectorXd score = X.transpose() * (w.array() * (y - mu).array()).matrix();
        const MatrixXd info = X.transpose() * info_w.asDiagonal() * X;
        Eigen::ColPivHouseholderQR<MatrixXd> qr(info);
        qr.setThreshold(kRankThreshold);
        if (qr.rank() < p) {
            if (beta.norm() > options.separation_norm / 10 || eta.cwiseAbs().maxCoeff() > 30)
                throw SeparationError("fit_weighted_logistic: information matrix degenerated as fitted "
                                      "probabilities approached 0 or 1 (separation)");
            throw SingularMatrixError(singular_message("fit_weighted_logistic: information", qr.rank(), p));
        }
        const VectorXd step = qr.solve(score);

        double scale = 1.0;
        VectorXd candidate = beta + step;
        double cand_dev = deviance(X, y, w, candidate);
        int halvings = 0;
        while (!(cand_dev <= dev * (1 + 1e-12) + 1e-300) && halvings < options.max_step_halvings) {
            scale *= 0.5;
            candidate = beta + scale * step;
            cand_dev = deviance(X, y, w, candidate);
            ++halvings;
        }
        beta = candidate;
        dev = cand_dev;
        fit.iterations = iter;

        const VectorXd new_score = weighted_score(X, y, w, beta, Link::Logit);
        fit.final_gradient_norm = new_score.norm() / w_total;
        const double step_size = (scale * step).norm();
        if (beta.norm() > options.separation_norm)
            throw SeparationError("fit_weighted_logistic: coefficient norm exceeded " +
                                  std::to_string(options.separation_norm) + " (separation)");
        if (fit.final_gradient_norm <= options.gradient_tolerance && step_size <= 1e-6 * (1.0 + beta.norm())) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged) {
        const VectorXd eta = X * beta;
        if (eta.cwiseAbs().maxCoeff() > 30.0 && fit.final_gradient_norm > options.gradient_tolerance * 1e-6)
            throw SeparationError("fit_weighted_logistic: no convergence with fitted probabilities numerically "
                                  "0 or 1 (separation)");
    }
    fit.coefficients = beta;
    return fit;
}

FitResult fit_weighted_linear(const Eigen::Ref<const MatrixXd>& design, const Eigen::Ref<const VectorXd>& response,
                              const Eigen::Ref<const VectorXd>& weights, std::vector<std::string> column_names,
                              AliasPolicy alias_policy) {
    check_shapes(design, response, weights);
    const auto rows = active_rows(weights);
    const Index n = static_cast<Index>(rows.size());
    const Index p = design.cols();
    if (n == 0) throw EstimationError("fit_weighted_linear: no positive-weight records");

    MatrixXd Xw(n, p);
    VectorXd yw(n);
    for (Index k = 0; k < n; ++k) {
        const Index i = rows[static_cast<std::size_t>(k)];
        const double sw = std::sqrt(weights[i]);
        Xw.row(k) = sw * design.row(i);
        yw[k] = sw * response[i];
    }
    if (!Xw.allFinite() || !yw.allFinite())
        throw ValidationError("fit_weighted_linear: non-finite entry on a positive-weight row");

    Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
    qr.setThreshold(kRankThreshold);
    FitResult fit;
    fit.link = Link::Identity;
    fit.design_column_names = std::move(column_names);
    if (qr.rank() < p) {
        if (alias_policy == AliasPolicy::Error || qr.rank() == 0)
            throw SingularMatrixError(singular_message("fit_weighted_linear", qr.rank(), p));
        fit.aliased.assign(static_cast<std::size_t>(p), false);
        const auto& perm = qr.colsPermutation().indices();
        for (Index k = qr.rank(); k < p; ++k) fit.aliased[static_cast<std::size_t>(perm[k])] = true;
        std::vector<Index> kept;
        for (Index j = 0; j < p; ++j)
            if (!fit.is_aliased(j)) kept.push_back(j);
        MatrixXd Xk(n, static_cast<Index>(kept.size()));
        for (std::size_t c = 0; c < kept.size(); ++c) Xk.col(static_cast<Index>(c)) = Xw.col(kept[c]);
        const VectorXd bk = Xk.colPivHouseholderQr().solve(yw);
        fit.coefficients = VectorXd::Zero(p);
        for (std::size_t c = 0; c < kept.size(); ++c) fit.coefficients[kept[c]] = bk[static_cast<Index>(c)];
    } else {
        fit.coefficients = qr.solve(yw);
    }
    fit.converged = true;
    fit.iterations = 1;
    fit.final_gradient_norm = (Xw.transpose() * (yw - Xw * fit.coefficients)).norm() / weights.sum();
    return fit;
}

Eigen::VectorXd predict(const FitResult& fit, const Eigen::Ref<const MatrixXd>& design, Link link) {
    if (design.cols() != fit.coefficients.size())
        throw ValidationError("predict: design has " + std::to_string(design.cols()) + " columns, fit has " +
                              std::to_string(fit.coefficients.size()));
    VectorXd eta = design * fit.coefficients;
    if (link == Link::Logit)
        for (Index i = 0; i < eta.size(); ++i) eta[i] = expit(eta[i]);
    return eta;
}

}  // namespace sbridge
