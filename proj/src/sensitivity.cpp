#include "surrogate_bridge/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "surrogate_bridge/errors.hpp"

namespace sbridge {

double pte_to_bias(double te_target, double placebo_risk, double pte) {
    if (!(te_target > 0.0 && te_target < 1.0)) throw ValidationError("pte_to_bias: te_target must lie in (0,1)");
    if (!(placebo_risk > 0.0 && placebo_risk < 1.0))
        throw ValidationError("pte_to_bias: placebo_risk must lie in (0,1)");
    if (!(pte >= 0.0 && pte <= 1.0)) throw ValidationError("pte_to_bias: pte must lie in [0,1]");
    const double te_ate = -placebo_risk * te_target;
    return std::abs(te_ate * (1.0 - pte));
}

double colonization_bound(double te_colonized, double te_against_colonization) {
    if (!(te_colonized < 1.0 && te_against_colonization < 1.0))
        throw ValidationError("colonization_bound: efficacies must be below 1");
    return 1.0 - (1.0 - te_colonized) * (1.0 - te_against_colonization);
}

std::vector<BiasSpecification> conservative_grid(double magnitude, std::size_t n_points) {
    if (n_points == 0) throw ValidationError("conservative_grid: need at least one point");
    if (n_points == 1) return {BiasSpecification{0.0, magnitude}};
    std::vector<BiasSpecification> out;
    for (std::size_t k = 0; k < n_points; ++k)
        out.push_back({0.0, magnitude * static_cast<double>(k) / static_cast<double>(n_points - 1)});
    return out;
}

std::vector<BiasSpecification> symmetric_grid(double magnitude, std::size_t n_points) {
    if (n_points < 2) throw ValidationError("symmetric_grid: need at least two points");
    std::vector<BiasSpecification> out;
    for (std::size_t k = 0; k < n_points; ++k)
        out.push_back({0.0, -magnitude + 2.0 * magnitude * static_cast<double>(k) / static_cast<double>(n_points - 1)});
    return out;
}

SensitivityReport summarize(const SensitivityGrid& grid, double threshold) {
    if (grid.points.empty()) throw ValidationError("sensitivity grid is empty");
    SensitivityReport r;
    r.threshold = threshold;
    const auto& first = grid.points.front();
    r.ignorance_interval = {first.estimate.ve, first.estimate.ve};
    r.eui = first.ve_ci;
    for (const auto& p : grid.points) {
        r.ignorance_interval.lower = std::min(r.ignorance_interval.lower, p.estimate.ve);
        r.ignorance_interval.upper = std::max(r.ignorance_interval.upper, p.estimate.ve);
        r.eui.lower = std::min(r.eui.lower, p.ve_ci.lower);
        r.eui.upper = std::max(r.eui.upper, p.ve_ci.upper);
    }
    if (!(r.eui.lower <= r.ignorance_interval.lower && r.ignorance_interval.upper <= r.eui.upper))
        throw Error("sensitivity report: EUI does not contain the ignorance interval");
    r.success = evaluate_success(r, threshold);
    return r;
}

bool evaluate_success(const SensitivityReport& report, double threshold) { return report.eui.lower >= threshold; }

SweepResult sweep_grid(const BiasPipeline& pipeline, std::span<const BiasSpecification> grid, double level,
                       double threshold) {
    if (grid.empty()) throw ValidationError("sweep_grid: bias grid is empty");
    SweepResult out;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto& bias = grid[k];
        auto describe = [&] {
            std::ostringstream os;
            os << "grid point " << k << " (u_uc=" << bias.u_uc << ", u_ct=" << bias.u_ct << ")";
            return os.str();
        };
        if (!bias.finite()) throw ValidationError(describe() + ": non-finite bias");
        PointEstimate pe;
        try {
            pe = pipeline(bias);
        } catch (const ValidationError& e) {
            throw ValidationError(describe() + ": " + e.what());
        } catch (const EstimationError& e) {
            throw EstimationError(describe() + ": " + e.what());
        }
        GridPoint gp{bias, pe.estimate, pe.se_log_one_minus_ve,
                     wald_interval_ve(pe.estimate, pe.se_log_one_minus_ve, level)};
        out.grid.points.push_back(gp);
    }
    out.report = summarize(out.grid, threshold);
    return out;
}

}  // namespace sbridge
