#include "surrogate_bridge/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "surrogate_bridge/analysis.hpp"
#include "surrogate_bridge/errors.hpp"
#include "surrogate_bridge/frame.hpp"
#include "surrogate_bridge/report.hpp"
#include "surrogate_bridge/sensitivity.hpp"
#include "surrogate_bridge/simulation.hpp"

namespace sbridge {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "1.0.0";
constexpr int kPresetVersion = 1;

struct RunConfig {
    std::string command;
    std::string input;
    double t0 = 90.0;
    std::optional<SamplingDesign> design;
    Method estimator = Method::PlugIn;
    VarianceKind variance = VarianceKind::Sandwich;
    std::size_t b = 500;
    double level = 0.95;
    double threshold = 0.3;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    unsigned threads = 1;
    BiasSpecification bias;
    std::vector<std::string> presets;
    std::optional<json> scenario;
    std::optional<std::size_t> reps;
    std::optional<std::optional<std::size_t>> sampled;
    std::vector<BiasSpecification> grid;
    std::size_t replicate = 0;
};

BiasSpecification parse_bias(const json& j) {
    BiasSpecification b;
    b.u_uc = j.value("u_uc", 0.0);
    b.u_ct = j.value("u_ct", 0.0);
    return b;
}

json bias_json(const BiasSpecification& b) { return {{"u_uc", b.u_uc}, {"u_ct", b.u_ct}}; }

std::optional<std::size_t> parse_sampled(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "all") return std::nullopt;
        throw ValidationError("sampled must be a count or \"all\"");
    }
    return j.get<std::size_t>();
}

std::optional<std::size_t> parse_sampled(const std::string& s) {
    if (s == "all") return std::nullopt;
    try {
        std::size_t pos = 0;
        const auto v = std::stoul(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("--sampled must be a count or 'all', got '" + s + "'");
    }
}

SamplingDesign parse_design(const json& j) {
    SamplingDesign d;
    if (j.contains("control_ratio") && !j["control_ratio"].is_null()) d.control_ratio = j["control_ratio"].get<int>();
    if (j.contains("rct_sampled")) {
        const auto& r = j["rct_sampled"];
        if (!r.is_array() || r.size() != 2) throw ValidationError("design.rct_sampled must be a two-element array");
        for (std::size_t a = 0; a < 2; ++a) d.rct_sampled[a] = parse_sampled(r[a]);
    }
    return d;
}

std::vector<BiasSpecification> parse_grid(const json& j) {
    if (j.is_array()) {
        std::vector<BiasSpecification> g;
        for (const auto& p : j) g.push_back(parse_bias(p));
        return g;
    }
    if (!j.is_object()) throw ValidationError("grid must be an array of bias points or an object");
    double magnitude = 0.0;
    if (j.contains("pte")) {
        const auto& p = j["pte"];
        magnitude = pte_to_bias(p.at("te_target").get<double>(), p.at("placebo_risk").get<double>(),
                                p.at("pte").get<double>());
    } else {
        magnitude = j.at("u_ct_max").get<double>();
    }
    const auto points = j.value("points", std::size_t{5});
    auto grid = j.value("symmetric", false) ? symmetric_grid(magnitude, points) : conservative_grid(magnitude, points);
    const double u_uc = j.value("u_uc", 0.0);
    for (auto& b : grid) b.u_uc = u_uc;
    return grid;
}

void apply_scenario_overrides(ScenarioSpec& spec, const json& j) {
    if (!j.is_object()) throw ValidationError("scenario must be an object");
    auto law = [](const json& l) { return NormalLaw{l.at("mean").get<double>(), l.at("variance").get<double>()}; };
    for (const auto& [key, v] : j.items()) {
        if (key == "name") spec.name = v.get<std::string>();
        else if (key == "n_obs") spec.n_obs = v.get<std::size_t>();
        else if (key == "n_rct_per_arm") spec.n_rct_per_arm = v.get<std::size_t>();
        else if (key == "s_control") spec.s_control = law(v);
        else if (key == "s_vaccine") spec.s_vaccine = law(v);
        else if (key == "beta") {
            if (!v.is_array() || v.size() != 5) throw ValidationError("scenario.beta must have five entries");
            for (std::size_t k = 0; k < 5; ++k) spec.beta[k] = v[k].get<double>();
        } else if (key == "control_ratio") spec.control_ratio = v.get<int>();
        else if (key == "sampled_per_arm") spec.sampled_per_arm = parse_sampled(v);
        else if (key == "analysis_bias") spec.analysis_bias = parse_bias(v);
        else if (key == "replicates") spec.replicates = v.get<std::size_t>();
        else if (key == "base_seed") spec.base_seed = v.get<std::uint64_t>();
        else throw ValidationError("scenario: unknown key '" + key + "'");
    }
}

void load_config_file(RunConfig& c, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    static const std::set<std::string> known{"command", "input", "t0", "design", "estimator", "variance", "b",
                                              "level", "threshold", "seed", "out", "threads", "bias", "preset",
                                              "presets", "scenario", "reps", "sampled", "grid", "replicate"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ValidationError("config: unknown key '" + key + "'");
    c.command = j.value("command", c.command);
    c.input = j.value("input", c.input);
    c.t0 = j.value("t0", c.t0);
    if (j.contains("design")) c.design = parse_design(j["design"]);
    if (j.contains("estimator")) c.estimator = parse_method(j["estimator"].get<std::string>());
    if (j.contains("variance")) c.variance = parse_variance_kind(j["variance"].get<std::string>());
    c.b = j.value("b", c.b);
    c.level = j.value("level", c.level);
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.out = j.value("out", c.out);
    c.threads = j.value("threads", c.threads);
    if (j.contains("bias")) c.bias = parse_bias(j["bias"]);
    if (j.contains("preset")) c.presets = {j["preset"].get<std::string>()};
    if (j.contains("presets")) c.presets = j["presets"].get<std::vector<std::string>>();
    if (j.contains("scenario")) c.scenario = j["scenario"];
    if (j.contains("reps")) c.reps = j["reps"].get<std::size_t>();
    if (j.contains("sampled")) c.sampled = parse_sampled(j["sampled"]);
    if (j.contains("grid")) c.grid = parse_grid(j["grid"]);
    c.replicate = j.value("replicate", c.replicate);
}

json design_json(const std::optional<SamplingDesign>& d) {
    if (!d) return nullptr;
    json r = json::array();
    for (const auto& s : d->rct_sampled) r.push_back(s ? json(*s) : json("all"));
    return {{"control_ratio", d->control_ratio ? json(*d->control_ratio) : json(nullptr)}, {"rct_sampled", r}};
}

json scenario_json(const ScenarioSpec& s) {
    return {{"name", s.name},
            {"n_obs", s.n_obs},
            {"n_rct_per_arm", s.n_rct_per_arm},
            {"s_control", {{"mean", s.s_control.mean}, {"variance", s.s_control.variance}}},
            {"s_vaccine", {{"mean", s.s_vaccine.mean}, {"variance", s.s_vaccine.variance}}},
            {"beta", s.beta},
            {"control_ratio", s.control_ratio},
            {"sampled_per_arm", s.sampled_per_arm ? json(*s.sampled_per_arm) : json("all")},
            {"analysis_bias", bias_json(s.analysis_bias)},
            {"replicates", s.replicates},
            {"base_seed", s.base_seed}};
}

json config_json(const RunConfig& c) {
    json j{{"command", c.command},
           {"estimator", to_string(c.estimator)},
           {"variance", to_string(c.variance)},
           {"b", c.b},
           {"level", c.level},
           {"threshold", c.threshold},
           {"out", c.out},
           {"threads", c.threads},
           {"bias", bias_json(c.bias)}};
    if (c.seed) j["seed"] = *c.seed;
    if (!c.input.empty()) {
        j["input"] = c.input;
        j["t0"] = c.t0;
        j["design"] = design_json(c.design);
    }
    if (!c.presets.empty()) j["presets"] = c.presets;
    if (c.command == "sensitivity") {
        json g = json::array();
        for (const auto& b : c.grid) g.push_back(bias_json(b));
        j["grid"] = g;
        if (c.input.empty()) j["replicate"] = c.replicate;
    }
    return j;
}

std::vector<ScenarioSpec> resolve_scenarios(const RunConfig& c) {
    std::vector<ScenarioSpec> specs;
    if (c.presets.empty()) specs.emplace_back();
    for (const auto& name : c.presets) specs.push_back(preset(name));
    for (auto& s : specs) {
        if (c.scenario) apply_scenario_overrides(s, *c.scenario);
        if (c.reps) s.replicates = *c.reps;
        if (c.sampled) s.sampled_per_arm = *c.sampled;
        if (c.seed) s.base_seed = *c.seed;
        s.validate();
    }
    return specs;
}

AnalysisOptions analysis_options(const RunConfig& c, const BiasSpecification& bias) {
    AnalysisOptions ao;
    ao.method = c.estimator;
    ao.bias = bias;
    ao.variance = c.variance;
    ao.bootstrap.replicates = c.b;
    ao.bootstrap.seed = c.seed.value_or(1);
    ao.bootstrap.threads = c.threads;
    return ao;
}

AnalysisFrame load_frame(const RunConfig& c, json& provenance) {
    if (!c.input.empty()) {
        const auto d = read_dataset_csv(c.input, c.t0);
        const auto design = c.design ? *c.design : infer_design(d);
        provenance["design_used"] = design_json(design);
        return make_frame(d, design);
    }
    if (c.presets.size() != 1)
        throw ValidationError(c.command + ": supply an input dataset or exactly one preset to generate one");
    const auto spec = resolve_scenarios(c).front();
    const auto d = generate_trial(spec, c.replicate);
    provenance["generated_from"] = scenario_json(spec);
    return make_frame(d, scenario_design(spec, d));
}

std::string to_text(const auto& writer) {
    std::ostringstream os;
    writer(os);
    return os.str();
}

void write_manifest(const RunConfig& c, const json& extra) {
    json m{{"tool", "surrogate-bridge"},
           {"version", kVersion},
           {"preset_version", kPresetVersion},
           {"config", config_json(c)}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write_file((std::filesystem::path(c.out) / "manifest.json").string(), m.dump(2) + "\n");
}

int cmd_estimate(const RunConfig& c, std::ostream& out) {
    json extra = json::object();
    const auto frame = load_frame(c, extra);
    const auto res = analyze(frame, analysis_options(c, c.bias));
    const auto csv = to_text([&](std::ostream& os) { write_effect_estimates_csv(os, res, c.level); });
    write_file((std::filesystem::path(c.out) / "effect_estimates.csv").string(), csv);
    write_manifest(c, extra);
    out << csv;
    return kExitOk;
}

int cmd_simulate(const RunConfig& c, std::ostream& out) {
    RunOptions ro;
    ro.estimator = c.estimator;
    ro.variance = c.variance;
    ro.bootstrap_b = c.b;
    ro.threads = c.threads;
    ro.threshold = c.threshold;
    ro.level = c.level;
    std::vector<ReplicateRow> raw;
    std::vector<ReplicateMetrics> metrics;
    json scenarios = json::array();
    for (const auto& spec : resolve_scenarios(c)) {
        const auto run = run_replicates(spec, ro);
        const auto truth = true_parameters(spec);
        metrics.push_back(aggregate_metrics(run.rows, truth));
        raw.insert(raw.end(), run.rows.begin(), run.rows.end());
        auto sj = scenario_json(spec);
        sj["truth"] = {{"theta0", truth.theta0}, {"theta1", truth.theta1}, {"ve", truth.ve}};
        scenarios.push_back(sj);
    }
    const std::filesystem::path dir(c.out);
    write_file((dir / "raw_replicates.csv").string(), to_text([&](std::ostream& os) { write_raw_replicates_csv(os, raw); }));
    write_file((dir / "metrics.csv").string(), to_text([&](std::ostream& os) { write_metrics_csv(os, metrics); }));
    write_file((dir / "plotdata.csv").string(), to_text([&](std::ostream& os) { write_plotdata_csv(os, metrics); }));
    const auto table = to_text([&](std::ostream& os) { write_metrics_table(os, metrics); });
    write_file((dir / "metrics.txt").string(), table);
    write_manifest(c, {{"scenarios", scenarios}});
    out << table;
    return kExitOk;
}

int cmd_sensitivity(const RunConfig& c, std::ostream& out) {
    json extra = json::object();
    const auto frame = load_frame(c, extra);
    const auto grid = c.grid.empty() ? std::vector<BiasSpecification>{c.bias} : c.grid;
    const BiasPipeline pipeline = [&](const BiasSpecification& bias) {
        const auto res = analyze(frame, analysis_options(c, bias));
        return PointEstimate{res.estimate, res.primary().se_log_one_minus_ve};
    };
    const auto sweep = sweep_grid(pipeline, grid, c.level, c.threshold);
    const std::filesystem::path dir(c.out);
    write_file((dir / "grid.csv").string(), to_text([&](std::ostream& os) { write_grid_csv(os, sweep.grid); }));
    const auto report = to_text([&](std::ostream& os) { write_sensitivity_report_csv(os, sweep.report); });
    write_file((dir / "report.csv").string(), report);
    write_manifest(c, extra);
    out << report;
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Transported surrogate-outcome estimation of vaccine efficacy", "surrogate-bridge"};
    std::string command, config_path, preset_list, estimator, variance, sampled, out_dir;
    std::size_t b = 0, reps = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    double threshold = 0.0;
    app.add_option("command", command, "estimate | simulate | sensitivity")
        ->check(CLI::IsMember({"estimate", "simulate", "sensitivity"}));
    auto* o_config = app.add_option("--config", config_path, "JSON run configuration");
    auto* o_preset = app.add_option("--preset", preset_list, "scenario preset name(s), comma separated");
    auto* o_est = app.add_option("--estimator", estimator, "plug-in | one-step");
    auto* o_var = app.add_option("--variance", variance, "sandwich | bootstrap | both");
    auto* o_b = app.add_option("--b", b, "bootstrap replicates");
    auto* o_reps = app.add_option("--reps", reps, "simulation replicates");
    auto* o_sampled = app.add_option("--sampled", sampled, "phase 3 records sampled per arm, or 'all'");
    auto* o_seed = app.add_option("--seed", seed, "base seed");
    auto* o_threads = app.add_option("--threads", threads, "worker threads");
    auto* o_out = app.add_option("--out", out_dir, "output directory");
    auto* o_thr = app.add_option("--threshold", threshold, "success threshold on the VE EUI lower bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        RunConfig c;
        if (const char* env = std::getenv("SURROGATE_BRIDGE_THREADS")) {
            try {
                c.threads = static_cast<unsigned>(std::stoul(env));
            } catch (const std::exception&) {
                throw ValidationError(std::string("SURROGATE_BRIDGE_THREADS is not a count: ") + env);
            }
        }
        if (o_config->count()) load_config_file(c, config_path);
        if (!command.empty()) {
            if (!c.command.empty() && c.command != command)
                throw ValidationError("command '" + command + "' conflicts with config command '" + c.command + "'");
            c.command = command;
        }
        if (c.command.empty()) throw ValidationError("no command given (estimate, simulate or sensitivity)");
        if (o_preset->count()) {
            c.presets.clear();
            std::stringstream ss(preset_list);
            for (std::string p; std::getline(ss, p, ',');)
                if (!p.empty()) c.presets.push_back(p);
        }
        if (o_est->count()) c.estimator = parse_method(estimator);
        if (o_var->count()) c.variance = parse_variance_kind(variance);
        if (o_b->count()) c.b = b;
        if (o_reps->count()) c.reps = reps;
        if (o_sampled->count()) c.sampled = parse_sampled(sampled);
        if (o_seed->count()) c.seed = seed;
        if (o_threads->count()) c.threads = threads;
        if (o_out->count()) c.out = out_dir;
        if (o_thr->count()) c.threshold = threshold;
        if (c.threads == 0) c.threads = 1;
        if (!(c.level > 0.0 && c.level < 1.0)) throw ValidationError("level must lie in (0,1)");
        if (c.variance != VarianceKind::Sandwich && c.b < 2) throw ValidationError("--b must be at least 2");
        if (c.command == "estimate" && c.input.empty() && c.presets.empty())
            throw ValidationError("estimate: config must name an input dataset");

        std::error_code ec;
        std::filesystem::create_directories(c.out, ec);
        if (ec || !std::filesystem::is_directory(c.out))
            throw ValidationError("output directory '" + c.out + "' is not writable");

        if (c.command == "estimate") return cmd_estimate(c, out);
        if (c.command == "simulate") return cmd_simulate(c, out);
        return cmd_sensitivity(c, out);
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const EstimationError& e) {
        err << "estimation error: " << e.what() << '\n';
        return kExitEstimation;
    } catch (const json::exception& e) {
        err << "validation error: config: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace sbridge
