#include "surrogate_bridge/frame.hpp"

#include <cmath>
#include <limits>

#include "surrogate_bridge/errors.hpp"

namespace sbridge {

std::size_t AnalysisFrame::n_rct() const {
    std::size_t n = 0;
    for (int v : z) n += v == 0;
    return n;
}

std::size_t AnalysisFrame::n_obs() const { return rows() - n_rct(); }

int AnalysisFrame::stratum(std::size_t i) const {
    if (z[i] == 1) return y[static_cast<Eigen::Index>(i)] == 1.0 ? 0 : 1;
    return a[i] == 1 ? 3 : 2;
}

AnalysisFrame AnalysisFrame::take(std::span<const std::size_t> idx) const {
    AnalysisFrame out;
    const auto m = static_cast<Eigen::Index>(idx.size());
    out.x.resize(m, x.cols());
    out.s.resize(m, s.cols());
    out.y.resize(m);
    out.pi.resize(m);
    out.weight.resize(m);
    out.z.resize(idx.size());
    out.a.resize(idx.size());
    out.eps.resize(idx.size());
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
        out.x.row(k) = x.row(i);
        out.s.row(k) = s.row(i);
        out.y[k] = y[i];
        out.pi[k] = pi[i];
        out.weight[k] = weight[i];
        out.z[static_cast<std::size_t>(k)] = z[static_cast<std::size_t>(i)];
        out.a[static_cast<std::size_t>(k)] = a[static_cast<std::size_t>(i)];
        out.eps[static_cast<std::size_t>(k)] = eps[static_cast<std::size_t>(i)];
    }
    return out;
}

AnalysisFrame make_frame(const HarmonizedDataset& d, std::span<const double> pi) {
    require_valid(d);
    if (d.allow_unknown_outcomes)
        for (const auto& r : d.records)
            if (r.z == 1 && !observational_outcome(r, d.t0))
                throw ValidationError("record " + r.id +
                                      ": censored before horizon; estimators require complete follow-up");
    if (pi.size() != d.records.size()) throw ValidationError("sampling probability vector length mismatch");

    const auto n = static_cast<Eigen::Index>(d.records.size());
    const auto p = static_cast<Eigen::Index>(d.covariate_dim());
    const auto q = static_cast<Eigen::Index>(d.surrogate_dim());
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();

    AnalysisFrame f;
    f.x.resize(n, p);
    f.s.setConstant(n, q, nan);
    f.y.setConstant(n, nan);
    f.pi.resize(n);
    f.weight.resize(n);
    f.z.resize(d.records.size());
    f.a.resize(d.records.size());
    f.eps.resize(d.records.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = d.records[static_cast<std::size_t>(i)];
        const auto ui = static_cast<std::size_t>(i);
        for (Eigen::Index j = 0; j < p; ++j) f.x(i, j) = r.x[static_cast<std::size_t>(j)];
        if (r.eps_s)
            for (Eigen::Index j = 0; j < q; ++j) f.s(i, j) = (*r.s)[static_cast<std::size_t>(j)];
        f.z[ui] = r.z;
        f.a[ui] = r.a;
        f.eps[ui] = r.eps_s ? 1 : 0;
        if (r.z == 1) f.y[i] = *observational_outcome(r, d.t0);
        const double pr = pi[ui];
        if (!(pr > 0.0 && pr <= 1.0) && r.eps_s)
            throw ValidationError("record " + r.id + ": sampling probability must lie in (0,1]");
        f.pi[i] = pr;
        f.weight[i] = r.eps_s ? 1.0 / pr : 0.0;
    }
    return f;
}

AnalysisFrame make_frame(const HarmonizedDataset& d, const SamplingDesign& design) {
    const auto pi = sampling_probabilities(d, design);
    return make_frame(d, pi);
}

}  // namespace sbridge
