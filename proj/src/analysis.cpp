#include "surrogate_bridge/analysis.hpp"

#include "surrogate_bridge/errors.hpp"

namespace sbridge {

const char* to_string(VarianceKind v) {
    switch (v) {
        case VarianceKind::Sandwich: return "sandwich";
        case VarianceKind::Bootstrap: return "bootstrap";
        case VarianceKind::Both: return "both";
    }
    return "?";
}

VarianceKind parse_variance_kind(const std::string& s) {
    if (s == "sandwich") return VarianceKind::Sandwich;
    if (s == "bootstrap") return VarianceKind::Bootstrap;
    if (s == "both") return VarianceKind::Both;
    throw ValidationError("unknown variance method '" + s + "' (expected sandwich, bootstrap or both)");
}

Method parse_method(const std::string& s) {
    if (s == "plug-in" || s == "plug_in") return Method::PlugIn;
    if (s == "one-step" || s == "one_step") return Method::OneStep;
    throw ValidationError("unknown estimator '" + s + "' (expected plug-in or one-step)");
}

const VarianceReport& AnalysisResult::primary() const {
    if (analytic) return *analytic;
    if (bootstrap) return *bootstrap;
    throw Error("AnalysisResult: no variance computed");
}

EstimatePipeline make_pipeline(const AnalysisOptions& options) {
    EstimationOptions est{options.method, options.bias, options.randomization};
    return [est](const AnalysisFrame& f) {
        const auto r = estimate_effect(f, est);
        return std::array<double, 2>{r.estimate.theta0, r.estimate.theta1};
    };
}

AnalysisResult analyze(const AnalysisFrame& f, const AnalysisOptions& options) {
    const auto fit = estimate_effect(f, {options.method, options.bias, options.randomization});
    AnalysisResult out;
    out.estimate = fit.estimate;
    if (options.variance != VarianceKind::Bootstrap) {
        if (options.method == Method::PlugIn)
            out.analytic = sandwich_variance(f, fit.nuisances, options.sandwich);
        else
            out.analytic = eif_variance_report(fit.projected_eif[0], fit.projected_eif[1], fit.estimate.theta0,
                                               fit.estimate.theta1);
    }
    if (options.variance != VarianceKind::Sandwich)
        out.bootstrap = stratified_bootstrap(f, make_pipeline(options), options.bootstrap);
    return out;
}

}  // namespace sbridge
