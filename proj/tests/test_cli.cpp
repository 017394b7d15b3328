#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fixtures.hpp"
#include "surrogate_bridge/analysis.hpp"
#include "surrogate_bridge/cli.hpp"
#include "surrogate_bridge/errors.hpp"
#include "surrogate_bridge/report.hpp"

using namespace sbridge;
namespace fs = std::filesystem;

namespace {

struct Invocation {
    int code;
    std::string out, err;
};

Invocation run(std::vector<std::string> args) {
    args.insert(args.begin(), "surrogate-bridge");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sb_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(); }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    for (std::string line; std::getline(ss, line);) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

// Writes a generated dataset plus a config naming it.
fs::path dataset_config(const fs::path& dir, const nlohmann::json& extra = {}) {
    const auto spec = fixtures::small_spec();
    const auto d = generate_trial(spec, 0);
    write_dataset_csv((dir / "data.csv").string(), d);
    nlohmann::json cfg{{"input", (dir / "data.csv").string()}, {"out", (dir / "out").string()}};
    for (const auto& [k, v] : extra.items()) cfg[k] = v;
    write_json(dir / "config.json", cfg);
    return dir / "config.json";
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("estimate on an exported CSV reproduces the in-process pipeline") {
        const auto dir = scratch("estimate");
        const auto cfg = dataset_config(dir, {{"bias", {{"u_uc", 0.0}, {"u_ct", 0.01}}}});
        const auto r = run({"estimate", "--config", cfg.string()});
        REQUIRE(r.code == kExitOk);
        const auto rows = parse_csv(slurp(dir / "out" / "effect_estimates.csv"));
        REQUIRE(rows.size() == 2);

        const auto spec = fixtures::small_spec();
        const auto d = generate_trial(spec, 0);
        const auto f = make_frame(d, scenario_design(spec, d));
        AnalysisOptions o;
        o.bias = {0.0, 0.01};
        const auto res = analyze(f, o);
        CHECK(rows[1][3] == format_exact(res.estimate.theta0));
        CHECK(rows[1][4] == format_exact(res.estimate.theta1));
        CHECK(rows[1][5] == format_exact(res.estimate.ve));
        CHECK(rows[1][10] == format_exact(res.analytic->se_log_one_minus_ve));
        CHECK(fs::exists(dir / "out" / "manifest.json"));
        const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
        CHECK(manifest["config"]["bias"]["u_ct"] == 0.01);
        CHECK(manifest["design_used"]["control_ratio"] == spec.control_ratio);
    }

    TEST_CASE("bootstrap variance via flags, seed recorded") {
        const auto dir = scratch("estimate_bs");
        const auto cfg = dataset_config(dir);
        const auto r = run({"estimate", "--config", cfg.string(), "--variance", "both", "--b", "30", "--seed", "5"});
        REQUIRE(r.code == kExitOk);
        const auto rows = parse_csv(slurp(dir / "out" / "effect_estimates.csv"));
        REQUIRE(rows.size() == 3);
        CHECK(rows[1][7] == "sandwich");
        CHECK(rows[2][7] == "bootstrap");
        CHECK(rows[2][18] == "30");
        const auto again = run({"estimate", "--config", cfg.string(), "--variance", "both", "--b", "30", "--seed", "5"});
        CHECK(parse_csv(slurp(dir / "out" / "effect_estimates.csv")) == rows);
        CHECK(nlohmann::json::parse(slurp(dir / "out" / "manifest.json"))["config"]["seed"] == 5);
    }

    TEST_CASE("exit code 2 on invalid input") {
        const auto dir = scratch("invalid");
        std::ofstream(dir / "bad.csv") << "id,z,a,eps_s,s_1,x_1,t_tilde,delta\no1,1,0,1,0.1,0.5,90,0\no1,0,0,1,0.2,0.5,,\n";
        write_json(dir / "c.json", {{"input", (dir / "bad.csv").string()}, {"out", (dir / "o").string()}});
        const auto r = run({"estimate", "--config", (dir / "c.json").string()});
        CHECK(r.code == kExitValidation);
        CHECK(r.err.find("duplicate id") != std::string::npos);

        write_json(dir / "c2.json", {{"bogus", 1}});
        CHECK(run({"estimate", "--config", (dir / "c2.json").string()}).code == kExitValidation);
        CHECK(run({"simulate", "--preset", "nope"}).code == kExitValidation);
        CHECK(run({"estimate", "--estimator", "magic"}).code == kExitValidation);
        CHECK(run({"frobnicate"}).code == kExitValidation);
        CHECK(run({}).code == kExitValidation);
    }

    TEST_CASE("exit code 3 on estimation failure") {
        const auto dir = scratch("estfail");
        const auto cfg = dataset_config(dir, {{"bias", {{"u_uc", 5.0}, {"u_ct", 0.0}}}});
        const auto r = run({"estimate", "--config", cfg.string()});
        CHECK(r.code == kExitEstimation);
        CHECK(r.err.find("theta0") != std::string::npos);
    }

    TEST_CASE("sensitivity with a single zero point: EUI equals the estimate's CI") {
        const auto dir = scratch("sens");
        const auto cfg = dataset_config(dir, {{"grid", nlohmann::json::array({{{"u_uc", 0.0}, {"u_ct", 0.0}}})}});
        REQUIRE(run({"sensitivity", "--config", cfg.string()}).code == kExitOk);
        REQUIRE(run({"estimate", "--config", cfg.string()}).code == kExitOk);
        const auto report = parse_csv(slurp(dir / "out" / "report.csv"));
        const auto est = parse_csv(slurp(dir / "out" / "effect_estimates.csv"));
        CHECK(report[1][0] == est[1][5]);
        CHECK(report[1][1] == est[1][5]);
        CHECK(report[1][2] == est[1][15]);
        CHECK(report[1][3] == est[1][16]);
    }

    TEST_CASE("sensitivity grid from a PTE specification and a failing point") {
        const auto dir = scratch("sens_pte");
        const auto cfg = dataset_config(
            dir, {{"grid", {{"pte", {{"te_target", 0.7}, {"placebo_risk", 0.1}, {"pte", 0.5}}}, {"points", 4}}}});
        REQUIRE(run({"sensitivity", "--config", cfg.string(), "--threshold", "0.1"}).code == kExitOk);
        const auto grid = parse_csv(slurp(dir / "out" / "grid.csv"));
        CHECK(grid.size() == 5);
        CHECK(std::stod(grid[4][1]) == doctest::Approx(0.035));
        CHECK(parse_csv(slurp(dir / "out" / "report.csv"))[1][4] == "0.1");

        const auto bad = dataset_config(dir, {{"grid", nlohmann::json::array({{{"u_uc", 0.0}}, {{"u_uc", 9.0}}})}});
        const auto r = run({"sensitivity", "--config", bad.string()});
        CHECK(r.code == kExitEstimation);
        CHECK(r.err.find("grid point 1") != std::string::npos);
    }

    TEST_CASE("simulate writes raw rows, metrics, plot data and a table with an SP column") {
        const auto dir = scratch("simulate");
        write_json(dir / "c.json", {{"command", "simulate"},
                                    {"scenario",
                                     {{"name", "mini"},
                                      {"n_obs", 1500},
                                      {"n_rct_per_arm", 300},
                                      {"s_control", {{"mean", 0.0}, {"variance", 1.0}}},
                                      {"s_vaccine", {{"mean", 0.6}, {"variance", 1.0}}},
                                      {"beta", {0.2, -1.0, 0.5, -0.08, 0.3}},
                                      {"control_ratio", 2},
                                      {"sampled_per_arm", 120}}},
                                    {"reps", 4},
                                    {"out", (dir / "o").string()}});
        const auto r = run({"--config", (dir / "c.json").string(), "--threads", "2"});
        REQUIRE(r.code == kExitOk);
        CHECK(r.out.find("SP") != std::string::npos);
        const auto raw = parse_csv(slurp(dir / "o" / "raw_replicates.csv"));
        CHECK(raw.size() == 5);
        std::ifstream mf(dir / "o" / "metrics.csv");
        const auto metrics = read_metrics_csv(mf);
        REQUIRE(metrics.size() == 1);
        CHECK(metrics[0].scenario == "mini");
        CHECK(metrics[0].n_ok == 4);
        CHECK(fs::exists(dir / "o" / "plotdata.csv"));
        CHECK(fs::exists(dir / "o" / "metrics.txt"));
        const auto manifest = nlohmann::json::parse(slurp(dir / "o" / "manifest.json"));
        CHECK(manifest["config"]["threads"] == 2);
        CHECK(manifest["scenarios"][0]["replicates"] == 4);
        CHECK(manifest["scenarios"][0]["truth"]["theta0"].get<double>() > 0.0);

        // Rerunning from the manifest's scenario reproduces the raw rows.
        auto scenario = manifest["scenarios"][0];
        scenario.erase("truth");
        write_json(dir / "c2.json", {{"command", "simulate"}, {"scenario", scenario}, {"out", (dir / "o2").string()}});
        REQUIRE(run({"--config", (dir / "c2.json").string()}).code == kExitOk);
        CHECK(slurp(dir / "o2" / "raw_replicates.csv") == slurp(dir / "o" / "raw_replicates.csv"));
    }

    TEST_CASE("thread count falls back to the environment") {
        const auto dir = scratch("env");
        const auto cfg = dataset_config(dir);
        ::setenv("SURROGATE_BRIDGE_THREADS", "3", 1);
        REQUIRE(run({"estimate", "--config", cfg.string()}).code == kExitOk);
        CHECK(nlohmann::json::parse(slurp(dir / "out" / "manifest.json"))["config"]["threads"] == 3);
        REQUIRE(run({"estimate", "--config", cfg.string(), "--threads", "2"}).code == kExitOk);
        CHECK(nlohmann::json::parse(slurp(dir / "out" / "manifest.json"))["config"]["threads"] == 2);
        ::setenv("SURROGATE_BRIDGE_THREADS", "lots", 1);
        CHECK(run({"estimate", "--config", cfg.string()}).code == kExitValidation);
        ::unsetenv("SURROGATE_BRIDGE_THREADS");
    }

    TEST_CASE("metrics CSV round trip is exact; text table uses 3 significant digits") {
        ReplicateMetrics m;
        m.scenario = "x";
        m.n_ok = 799;
        m.n_failed = 1;
        m.theta0 = {0.005123456789, 0.0052, 1.0 / 3.0 * 1e-4, 6.1e-4, std::nan(""), 6.3e-4, 0.9475};
        m.theta1 = {0.0025, 0.00251, 1e-5, 4.4e-4, 4.5e-4, 4.6e-4, 0.94};
        m.ve = {0.5, 0.497, -0.003, 0.156, 0.16, 0.158, 0.95};
        m.success_probability = 0.42;
        std::stringstream ss;
        write_metrics_csv(ss, {m, m});
        const auto back = read_metrics_csv(ss);
        REQUIRE(back.size() == 2);
        CHECK(back[0].theta0.truth == m.theta0.truth);
        CHECK(back[0].theta0.bias == m.theta0.bias);
        CHECK(std::isnan(back[0].theta0.mean_se_sw));
        CHECK(back[1].ve.coverage == m.ve.coverage);
        CHECK(back[1].success_probability == m.success_probability);
        CHECK(back[1].n_failed == 1);

        std::stringstream table;
        write_metrics_table(table, {m});
        CHECK(table.str().find("0.00512") != std::string::npos);
        CHECK(table.str().find("SP") != std::string::npos);

        std::stringstream empty;
        CHECK_THROWS_AS(write_metrics_csv(empty, {}), Error);
        CHECK_THROWS_AS(write_metrics_table(empty, {}), Error);
        CHECK_THROWS_AS(write_raw_replicates_csv(empty, {}), Error);
        CHECK(empty.str().empty());
    }

    TEST_CASE("the executable reports exit codes to the shell") {
        const auto dir = scratch("exe");
        const std::string exe = SB_CLI_PATH;
        const int ok = std::system((exe + " --help > " + (dir / "h.txt").string()).c_str());
        CHECK(WEXITSTATUS(ok) == 0);
        const int bad = std::system((exe + " simulate --preset nope --out " + (dir / "o").string() + " 2> /dev/null").c_str());
        CHECK(WEXITSTATUS(bad) == kExitValidation);
    }
}
