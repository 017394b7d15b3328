#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surrogate_bridge/analysis.hpp"
#include "surrogate_bridge/data_model.hpp"
#include "surrogate_bridge/estimators.hpp"

namespace sbridge {

struct NormalLaw {
    double mean = 0.0;
    double variance = 1.0;
};

/// Data-generating process and analysis settings for one simulation scenario.
/// Outcome model: P(Y = 1) = expit(b0 + b1 S + b2 X1 + b3 X2 + b4 X3) in
/// both studies and both arms.
struct ScenarioSpec {
    std::string name = "custom";
    std::size_t n_obs = 39000;
    std::size_t n_rct_per_arm = 3100;
    double x1_probability = 0.05;
    double x2_lower = 18.0;
    double x2_upper = 40.0;
    NormalLaw s_control{-1.45, 0.0225};
    NormalLaw s_vaccine{-1.45, 0.0225};
    std::array<double, 5> beta{-17.1, -8.2, 0.69, -0.03, 0.0};
    int control_ratio = 5;
    std::optional<std::size_t> sampled_per_arm = 500;  // nullopt: every phase 3 record
    BiasSpecification analysis_bias;
    std::size_t replicates = 800;
    std::uint64_t base_seed = 20240601;

    void validate() const;
};

std::vector<std::string> preset_names();
/// Throws ValidationError for an unknown name.
ScenarioSpec preset(const std::string& name);

/// Deterministic in (spec, replicate). Throws EstimationError, naming the
/// seed, when no observational case is drawn.
HarmonizedDataset generate_trial(const ScenarioSpec& spec, std::size_t replicate);

/// Seed of the data stream for a replicate.
std::uint64_t replicate_seed(const ScenarioSpec& spec, std::size_t replicate);

/// The two-phase design `generate_trial` applied to `d`.
SamplingDesign scenario_design(const ScenarioSpec& spec, const HarmonizedDataset& d);

struct TrueParameters {
    double theta0 = 0.0;
    double theta1 = 0.0;
    double ve = 0.0;
};

/// Monte Carlo integral of the outcome probability under each arm's
/// surrogate law, with common random numbers across arms.
TrueParameters true_parameters(const ScenarioSpec& spec, std::size_t n_mc = 2'000'000, std::uint64_t seed = 7);

struct RunOptions {
    Method estimator = Method::PlugIn;
    VarianceKind variance = VarianceKind::Sandwich;
    SamplingMode sampling = SamplingMode::Known;
    std::size_t bootstrap_b = 500;
    unsigned threads = 1;
    double threshold = 0.3;
    double level = 0.95;
    double max_failure_fraction = 0.02;
};

/// One replicate's outcome. SE fields are NaN when not requested; CIs use
/// the analytic SE when present, else the bootstrap SE.
struct ReplicateRow {
    std::string scenario;
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double theta0 = 0.0, theta1 = 0.0, ve = 0.0, log_one_minus_ve = 0.0;
    double se_sw_theta0 = 0.0, se_sw_theta1 = 0.0, se_sw_log = 0.0;
    double se_bs_theta0 = 0.0, se_bs_theta1 = 0.0, se_bs_log = 0.0;
    Interval ci_theta0, ci_theta1, ci_ve;
    bool success = false;
    std::size_t n_cases = 0;
};

struct ScenarioRun {
    ScenarioSpec spec;
    RunOptions options;
    std::vector<ReplicateRow> rows;
    std::size_t failures = 0;
};

/// Runs spec.replicates replicates (in parallel when threads > 1). Failed
/// replicates are kept as rows with ok = false; more than
/// max_failure_fraction failures throws EstimationError.
ScenarioRun run_replicates(const ScenarioSpec& spec, const RunOptions& options);

/// Runs a single replicate.
ReplicateRow run_replicate(const ScenarioSpec& spec, const RunOptions& options, std::size_t replicate);

struct ParameterMetrics {
    double truth = 0.0;
    double mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;          // for VE: SD of log(1 - VE) estimates
    double mean_se_sw = 0.0;  // for VE: on the log(1 - VE) scale
    double mean_se_bs = 0.0;
    double coverage = 0.0;
    double median = 0.0;
    double median_lower = 0.0;
    double median_upper = 0.0;
};

struct ReplicateMetrics {
    std::string scenario;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    ParameterMetrics theta0, theta1, ve;
    double success_probability = 0.0;
};

/// Throws ValidationError when no successful replicate is present.
ReplicateMetrics aggregate_metrics(const std::vector<ReplicateRow>& rows, const TrueParameters& truth);

}  // namespace sbridge
