#pragma once

#include <functional>
#include <span>
#include <vector>

#include "surrogate_bridge/estimators.hpp"
#include "surrogate_bridge/inference.hpp"

namespace sbridge {

/// |TE_ATE (1 - pte)| with TE_ATE = -placebo_risk * te_target.
double pte_to_bias(double te_target, double placebo_risk, double pte);

/// 1 - (1 - te_colonized)(1 - te_against_colonization).
double colonization_bound(double te_colonized, double te_against_colonization);

/// u_ct in {0, m/(n-1), ..., m}, u_uc = 0.
std::vector<BiasSpecification> conservative_grid(double magnitude, std::size_t n_points);
/// u_ct evenly spaced over [-m, m], u_uc = 0.
std::vector<BiasSpecification> symmetric_grid(double magnitude, std::size_t n_points);

struct GridPoint {
    BiasSpecification bias;
    EffectEstimate estimate;
    double se_log_one_minus_ve = 0.0;
    Interval ve_ci;
};

struct SensitivityGrid {
    std::vector<GridPoint> points;
};

struct SensitivityReport {
    Interval ignorance_interval;  // range of VE point estimates
    Interval eui;                 // envelope of the VE confidence intervals
    bool success = false;
    double threshold = 0.3;
};

struct SweepResult {
    SensitivityGrid grid;
    SensitivityReport report;
};

/// Estimate and se of log(1 - VE) at one bias point.
struct PointEstimate {
    EffectEstimate estimate;
    double se_log_one_minus_ve = 0.0;
};

using BiasPipeline = std::function<PointEstimate(const BiasSpecification&)>;

/// Runs `pipeline` at each grid point. A failing point aborts the sweep with
/// an error naming the point.
SweepResult sweep_grid(const BiasPipeline& pipeline, std::span<const BiasSpecification> grid, double level = 0.95,
                       double threshold = 0.3);

SensitivityReport summarize(const SensitivityGrid& grid, double threshold);

/// EUI lower bound at or above `threshold`.
bool evaluate_success(const SensitivityReport& report, double threshold);

}  // namespace sbridge
