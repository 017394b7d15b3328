#pragma once

#include <optional>

#include "surrogate_bridge/estimators.hpp"
#include "surrogate_bridge/inference.hpp"

namespace sbridge {

enum class VarianceKind { Sandwich, Bootstrap, Both };

const char* to_string(VarianceKind v);
VarianceKind parse_variance_kind(const std::string& s);
Method parse_method(const std::string& s);

struct AnalysisOptions {
    Method method = Method::PlugIn;
    BiasSpecification bias;
    VarianceKind variance = VarianceKind::Sandwich;
    BootstrapOptions bootstrap;
    SandwichOptions sandwich;
    RandomizationModel randomization;
};

/// Point estimate plus the requested standard errors. `analytic` is the
/// stacked sandwich for the plug-in estimator and the influence-function
/// variance for the one-step estimator.
struct AnalysisResult {
    EffectEstimate estimate;
    std::optional<VarianceReport> analytic;
    std::optional<VarianceReport> bootstrap;

    /// Analytic when available, otherwise bootstrap.
    const VarianceReport& primary() const;
};

AnalysisResult analyze(const AnalysisFrame& f, const AnalysisOptions& options);

/// The estimation pipeline rerun inside the bootstrap.
EstimatePipeline make_pipeline(const AnalysisOptions& options);

}  // namespace sbridge
