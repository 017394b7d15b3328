#include "surrogate_bridge/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "surrogate_bridge/errors.hpp"
#include "surrogate_bridge/frame.hpp"
#include "surrogate_bridge/glm.hpp"
#include "surrogate_bridge/random.hpp"

namespace sbridge {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Laws of S in the vaccine arm for the preset efficacy levels.
NormalLaw sim_vaccine_law(int ve) {
    switch (ve) {
        case 0: return {-1.45, 0.0225};
        case 50: return {-1.296, 0.04};
        case 90: return {-1.08, 0.0441};
    }
    throw ValidationError("no preset for VE " + std::to_string(ve));
}

NormalLaw supp_vaccine_law(int ve) {
    switch (ve) {
        case 0: return {-1.45, 0.0225};
        case 50: return {-1.29, 0.04};
        case 90: return {-1.04, 0.0441};
    }
    throw ValidationError("no preset for VE " + std::to_string(ve));
}

// Analysis bias u_ct for each PTE setting, as rounded constants.
double sim2_bias(int pte) {
    switch (pte) {
        case 100: return 0.0;
        case 83: return 0.0006;
        case 67: return 0.0012;
    }
    throw ValidationError("no preset for PTE " + std::to_string(pte));
}

constexpr std::array<int, 3> kVe{0, 50, 90};
constexpr std::array<int, 3> kSampled{100, 250, 500};
constexpr std::array<int, 3> kPte{100, 83, 67};

double linear_predictor(const std::array<double, 5>& b, double s, double x1, double x2, double x3) {
    return b[0] + b[1] * s + b[2] * x1 + b[3] * x2 + b[4] * x3;
}

// Indices of a simple random sample of m out of n (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < m; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    idx.resize(m);
    return idx;
}

}  // namespace

void ScenarioSpec::validate() const {
    if (n_obs == 0 || n_rct_per_arm == 0) throw ValidationError("scenario: study sizes must be positive");
    if (!(s_control.variance > 0.0) || !(s_vaccine.variance > 0.0))
        throw ValidationError("scenario: surrogate variances must be positive");
    if (!(x1_probability >= 0.0 && x1_probability <= 1.0)) throw ValidationError("scenario: X1 probability");
    if (!(x2_lower < x2_upper)) throw ValidationError("scenario: X2 range");
    if (control_ratio < 1) throw ValidationError("scenario: control ratio must be a positive integer");
    if (sampled_per_arm && (*sampled_per_arm == 0 || *sampled_per_arm > n_rct_per_arm))
        throw ValidationError("scenario: sampled per arm must lie in [1, n_rct_per_arm]");
    if (replicates == 0) throw ValidationError("scenario: replicate count must be at least 1");
    if (!analysis_bias.finite()) throw ValidationError("scenario: non-finite analysis bias");
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (int ve : kVe)
        for (int s : kSampled) out.push_back("sim1-ve" + std::to_string(ve) + "-s" + std::to_string(s));
    for (int pte : kPte)
        for (int ve : kVe) out.push_back("sim2-pte" + std::to_string(pte) + "-ve" + std::to_string(ve));
    for (int ve : kVe) out.push_back("supp-ve" + std::to_string(ve));
    return out;
}

ScenarioSpec preset(const std::string& name) {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw ValidationError("unknown preset '" + name + "'");
    ScenarioSpec spec;
    spec.name = name;
    int ve = 0, sampled = 0, pte = 0;
    if (std::sscanf(name.c_str(), "sim1-ve%d-s%d", &ve, &sampled) == 2) {
        spec.s_vaccine = sim_vaccine_law(ve);
        spec.sampled_per_arm = static_cast<std::size_t>(sampled);
    } else if (std::sscanf(name.c_str(), "sim2-pte%d-ve%d", &pte, &ve) == 2) {
        spec.s_vaccine = sim_vaccine_law(ve);
        spec.sampled_per_arm = 250;
        spec.analysis_bias = {0.0, sim2_bias(pte)};
    } else if (std::sscanf(name.c_str(), "supp-ve%d", &ve) == 1) {
        spec.beta[0] = -14.0;
        spec.beta[1] = -7.0;
        spec.s_vaccine = supp_vaccine_law(ve);
        spec.sampled_per_arm.reset();
    }
    return spec;
}

std::uint64_t replicate_seed(const ScenarioSpec& spec, std::size_t replicate) {
    return derive_seed(spec.base_seed, {kStreamData, replicate});
}

HarmonizedDataset generate_trial(const ScenarioSpec& spec, std::size_t replicate) {
    spec.validate();
    const std::uint64_t seed = replicate_seed(spec, replicate);
    Rng rng(seed);
    std::bernoulli_distribution x1_law(spec.x1_probability);
    std::uniform_real_distribution<double> x2_law(spec.x2_lower, spec.x2_upper);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    HarmonizedDataset d;
    d.covariate_names = {"x1", "x2", "x3"};
    d.surrogate_names = {"s"};
    d.records.reserve(spec.n_obs + 2 * spec.n_rct_per_arm);

    struct Draw {
        std::vector<double> x;
        double s;
        int y;
    };
    auto draw = [&](const NormalLaw& law) {
        Draw out;
        const double x1 = x1_law(rng) ? 1.0 : 0.0;
        const double x2 = x2_law(rng);
        const double x3 = std_normal(rng);
        out.x = {x1, x2, x3};
        out.s = law.mean + std::sqrt(law.variance) * std_normal(rng);
        out.y = unit(rng) < expit(linear_predictor(spec.beta, out.s, x1, x2, x3)) ? 1 : 0;
        return out;
    };

    std::vector<double> obs_s(spec.n_obs);
    std::vector<std::size_t> cases, controls;
    for (std::size_t i = 0; i < spec.n_obs; ++i) {
        auto dr = draw(spec.s_control);
        ParticipantRecord r;
        r.id = "o" + std::to_string(i + 1);
        r.x = std::move(dr.x);
        r.z = 1;
        r.a = 0;
        r.t_tilde = d.t0;
        r.delta = dr.y == 1;
        r.y = dr.y;
        obs_s[i] = dr.s;
        (dr.y == 1 ? cases : controls).push_back(i);
        d.records.push_back(std::move(r));
    }
    if (cases.empty()) {
        std::ostringstream os;
        os << "generate_trial: no observational cases drawn (scenario " << spec.name << ", replicate " << replicate
           << ", seed " << seed << ")";
        throw EstimationError(os.str());
    }
    auto measure = [&](std::size_t row, double s) {
        d.records[row].eps_s = true;
        d.records[row].s = std::vector<double>{s};
    };
    for (auto i : cases) measure(i, obs_s[i]);
    const std::size_t n_controls = static_cast<std::size_t>(spec.control_ratio) * cases.size();
    if (n_controls >= controls.size()) {
        for (auto i : controls) measure(i, obs_s[i]);
    } else {
        for (auto k : sample_without_replacement(controls.size(), n_controls, rng))
            measure(controls[k], obs_s[controls[k]]);
    }

    for (int arm = 0; arm < 2; ++arm) {
        const auto& law = arm == 1 ? spec.s_vaccine : spec.s_control;
        const std::size_t first = d.records.size();
        std::vector<double> arm_s(spec.n_rct_per_arm);
        for (std::size_t i = 0; i < spec.n_rct_per_arm; ++i) {
            auto dr = draw(law);
            ParticipantRecord r;
            r.id = "p" + std::to_string(arm) + "_" + std::to_string(i + 1);
            r.x = std::move(dr.x);
            r.z = 0;
            r.a = arm;
            arm_s[i] = dr.s;
            d.records.push_back(std::move(r));
        }
        if (!spec.sampled_per_arm) {
            for (std::size_t i = 0; i < spec.n_rct_per_arm; ++i) measure(first + i, arm_s[i]);
        } else {
            for (auto k : sample_without_replacement(spec.n_rct_per_arm, *spec.sampled_per_arm, rng))
                measure(first + k, arm_s[k]);
        }
    }
    return d;
}

SamplingDesign scenario_design(const ScenarioSpec& spec, const HarmonizedDataset& d) {
    std::size_t cases = 0, controls = 0;
    for (const auto& r : d.records)
        if (r.z == 1) (r.y.value_or(0) == 1 ? cases : controls)++;
    SamplingDesign design;
    if (static_cast<std::size_t>(spec.control_ratio) * cases < controls) design.control_ratio = spec.control_ratio;
    if (spec.sampled_per_arm) design.rct_sampled = {spec.sampled_per_arm, spec.sampled_per_arm};
    return design;
}

TrueParameters true_parameters(const ScenarioSpec& spec, std::size_t n_mc, std::uint64_t seed) {
    spec.validate();
    if (n_mc == 0) throw ValidationError("true_parameters: n_mc must be positive");
    Rng rng = make_stream(seed, {kStreamTruth});
    std::bernoulli_distribution x1_law(spec.x1_probability);
    std::uniform_real_distribution<double> x2_law(spec.x2_lower, spec.x2_upper);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    const double sd0 = std::sqrt(spec.s_control.variance);
    const double sd1 = std::sqrt(spec.s_vaccine.variance);
    double sum0 = 0.0, sum1 = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const double x1 = x1_law(rng) ? 1.0 : 0.0;
        const double x2 = x2_law(rng);
        const double x3 = std_normal(rng);
        const double e = std_normal(rng);
        sum0 += expit(linear_predictor(spec.beta, spec.s_control.mean + sd0 * e, x1, x2, x3));
        sum1 += expit(linear_predictor(spec.beta, spec.s_vaccine.mean + sd1 * e, x1, x2, x3));
    }
    TrueParameters t;
    t.theta0 = sum0 / static_cast<double>(n_mc);
    t.theta1 = sum1 / static_cast<double>(n_mc);
    t.ve = 1.0 - t.theta1 / t.theta0;
    return t;
}

ReplicateRow run_replicate(const ScenarioSpec& spec, const RunOptions& options, std::size_t replicate) {
    ReplicateRow row;
    row.scenario = spec.name;
    row.replicate = replicate;
    row.seed = replicate_seed(spec, replicate);
    row.se_sw_theta0 = row.se_sw_theta1 = row.se_sw_log = kNaN;
    row.se_bs_theta0 = row.se_bs_theta1 = row.se_bs_log = kNaN;
    try {
        const auto d = generate_trial(spec, replicate);
        for (const auto& r : d.records) row.n_cases += r.z == 1 && r.y.value_or(0) == 1;
        const auto frame = make_frame(d, scenario_design(spec, d));
        AnalysisOptions ao;
        ao.method = options.estimator;
        ao.bias = spec.analysis_bias;
        ao.variance = options.variance;
        ao.sandwich.sampling = options.sampling;
        ao.bootstrap.replicates = options.bootstrap_b;
        ao.bootstrap.seed = derive_seed(spec.base_seed, {kStreamBootstrap, replicate});
        ao.bootstrap.threads = 1;
        const auto res = analyze(frame, ao);
        const auto& est = res.estimate;
        row.theta0 = est.theta0;
        row.theta1 = est.theta1;
        row.ve = est.ve;
        row.log_one_minus_ve = est.log_one_minus_ve;
        if (res.analytic) {
            row.se_sw_theta0 = res.analytic->se_theta0;
            row.se_sw_theta1 = res.analytic->se_theta1;
            row.se_sw_log = res.analytic->se_log_one_minus_ve;
        }
        if (res.bootstrap) {
            row.se_bs_theta0 = res.bootstrap->se_theta0;
            row.se_bs_theta1 = res.bootstrap->se_theta1;
            row.se_bs_log = res.bootstrap->se_log_one_minus_ve;
        }
        const auto& v = res.primary();
        row.ci_theta0 = wald_interval(est.theta0, v.se_theta0, options.level);
        row.ci_theta1 = wald_interval(est.theta1, v.se_theta1, options.level);
        row.ci_ve = wald_interval_ve(est, v.se_log_one_minus_ve, options.level);
        row.success = row.ci_ve.lower >= options.threshold;
        row.ok = true;
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
    }
    return row;
}

ScenarioRun run_replicates(const ScenarioSpec& spec, const RunOptions& options) {
    spec.validate();
    ScenarioRun run;
    run.spec = spec;
    run.options = options;
    run.rows.resize(spec.replicates);
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(spec.replicates)));
    if (threads == 1) {
        for (std::size_t r = 0; r < spec.replicates; ++r) run.rows[r] = run_replicate(spec, options, r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(threads);
        {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < threads; ++t)
                pool.emplace_back([&, t] {
                    try {
                        for (std::size_t r = next++; r < spec.replicates; r = next++)
                            run.rows[r] = run_replicate(spec, options, r);
                    } catch (...) {
                        errors[t] = std::current_exception();
                        next = spec.replicates;
                    }
                });
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    for (const auto& row : run.rows) run.failures += !row.ok;
    if (static_cast<double>(run.failures) > options.max_failure_fraction * static_cast<double>(spec.replicates)) {
        std::ostringstream os;
        os << "scenario " << spec.name << ": " << run.failures << " of " << spec.replicates
           << " replicates failed; first failure:";
        for (const auto& row : run.rows)
            if (!row.ok) {
                os << " replicate " << row.replicate << " (seed " << row.seed << "): " << row.error;
                break;
            }
        throw EstimationError(os.str());
    }
    return run;
}

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Order-independent median.
double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ReplicateMetrics aggregate_metrics(const std::vector<ReplicateRow>& rows, const TrueParameters& truth) {
    std::vector<const ReplicateRow*> ok;
    for (const auto& r : rows)
        if (r.ok) ok.push_back(&r);
    if (ok.empty()) throw ValidationError("aggregate_metrics: no successful replicates");

    // Sort by replicate index so floating-point sums do not depend on row order.
    std::sort(ok.begin(), ok.end(), [](const ReplicateRow* a, const ReplicateRow* b) {
        return a->replicate < b->replicate;
    });

    ReplicateMetrics m;
    m.scenario = ok.front()->scenario;
    m.n_ok = ok.size();
    m.n_failed = rows.size() - ok.size();

    auto collect = [&](auto get) {
        std::vector<double> v;
        v.reserve(ok.size());
        for (const auto* r : ok) v.push_back(get(*r));
        return v;
    };
    auto fill = [&](ParameterMetrics& p, double t, auto est, auto sd_source, auto se_sw, auto se_bs, auto ci) {
        const auto e = collect(est);
        p.truth = t;
        p.mean = mean_of(e);
        p.bias = p.mean - t;
        p.sd = sd_of(collect(sd_source));
        p.mean_se_sw = mean_of(collect(se_sw));
        p.mean_se_bs = mean_of(collect(se_bs));
        std::size_t covered = 0;
        for (const auto* r : ok) covered += ci(*r).contains(t);
        p.coverage = static_cast<double>(covered) / static_cast<double>(ok.size());
        p.median = median_of(e);
        p.median_lower = median_of(collect([&](const ReplicateRow& r) { return ci(r).lower; }));
        p.median_upper = median_of(collect([&](const ReplicateRow& r) { return ci(r).upper; }));
    };
    fill(
        m.theta0, truth.theta0, [](const ReplicateRow& r) { return r.theta0; },
        [](const ReplicateRow& r) { return r.theta0; }, [](const ReplicateRow& r) { return r.se_sw_theta0; },
        [](const ReplicateRow& r) { return r.se_bs_theta0; }, [](const ReplicateRow& r) { return r.ci_theta0; });
    fill(
        m.theta1, truth.theta1, [](const ReplicateRow& r) { return r.theta1; },
        [](const ReplicateRow& r) { return r.theta1; }, [](const ReplicateRow& r) { return r.se_sw_theta1; },
        [](const ReplicateRow& r) { return r.se_bs_theta1; }, [](const ReplicateRow& r) { return r.ci_theta1; });
    fill(
        m.ve, truth.ve, [](const ReplicateRow& r) { return r.ve; },
        [](const ReplicateRow& r) { return r.log_one_minus_ve; }, [](const ReplicateRow& r) { return r.se_sw_log; },
        [](const ReplicateRow& r) { return r.se_bs_log; }, [](const ReplicateRow& r) { return r.ci_ve; });
    std::size_t successes = 0;
    for (const auto* r : ok) successes += r->success;
    m.success_probability = static_cast<double>(successes) / static_cast<double>(ok.size());
    return m;
}

}  // namespace sbridge
