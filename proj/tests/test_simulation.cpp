#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "surrogate_bridge/errors.hpp"
#include "surrogate_bridge/glm.hpp"
#include "surrogate_bridge/simulation.hpp"

using namespace sbridge;

namespace {

// Deterministic quadrature of E expit(b'(1, S, X)) under one surrogate law.
double quadrature_risk(const ScenarioSpec& s, const NormalLaw& law) {
    const int ns = 400, nx2 = 200, nx3 = 81;
    const double sd = std::sqrt(law.variance);
    double total = 0.0;
    for (int x1 = 0; x1 <= 1; ++x1) {
        const double p1 = x1 == 1 ? s.x1_probability : 1.0 - s.x1_probability;
        double acc = 0.0, wsum3 = 0.0;
        for (int k3 = 0; k3 < nx3; ++k3) {
            const double x3 = -8.0 + 16.0 * k3 / (nx3 - 1);
            const double w3 = std::exp(-0.5 * x3 * x3) * ((k3 == 0 || k3 == nx3 - 1) ? 0.5 : 1.0);
            if (s.beta[4] == 0.0 && k3 != nx3 / 2) continue;
            const double w3_used = s.beta[4] == 0.0 ? 1.0 : w3;
            double acc2 = 0.0;
            for (int k2 = 0; k2 < nx2; ++k2) {
                const double x2 = s.x2_lower + (s.x2_upper - s.x2_lower) * (k2 + 0.5) / nx2;
                double acc_s = 0.0, wsum_s = 0.0;
                for (int ks = 0; ks < ns; ++ks) {
                    const double z = -8.0 + 16.0 * ks / (ns - 1);
                    const double w = std::exp(-0.5 * z * z) * ((ks == 0 || ks == ns - 1) ? 0.5 : 1.0);
                    const double eta = s.beta[0] + s.beta[1] * (law.mean + sd * z) + s.beta[2] * x1 +
                                       s.beta[3] * x2 + s.beta[4] * x3;
                    acc_s += w * expit(eta);
                    wsum_s += w;
                }
                acc2 += acc_s / wsum_s / nx2;
            }
            acc += w3_used * acc2;
            wsum3 += w3_used;
        }
        total += p1 * acc / wsum3;
    }
    return total;
}

std::string to_csv(const HarmonizedDataset& d) {
    std::ostringstream os;
    write_dataset_csv(os, d);
    return os.str();
}

}  // namespace

TEST_SUITE("simulation") {
    TEST_CASE("preset catalogue") {
        const auto names = preset_names();
        CHECK(names.size() == 21);
        for (const auto& n : names) CHECK_NOTHROW(preset(n).validate());
        CHECK_THROWS_AS(preset("sim1-ve70-s500"), ValidationError);
        CHECK_THROWS_AS(preset("sim1-ve50-s500x"), ValidationError);
        const auto s = preset("sim2-pte67-ve90");
        CHECK(s.analysis_bias.u_ct == 0.0012);
        CHECK(s.sampled_per_arm == std::optional<std::size_t>{250});
        const auto supp = preset("supp-ve50");
        CHECK(supp.beta[0] == -14.0);
        CHECK_FALSE(supp.sampled_per_arm.has_value());
    }

    TEST_CASE("invalid specifications are rejected") {
        auto s = preset("sim1-ve0-s100");
        s.s_vaccine.variance = 0.0;
        CHECK_THROWS_AS(s.validate(), ValidationError);
        s = preset("sim1-ve0-s100");
        s.replicates = 0;
        CHECK_THROWS_AS(s.validate(), ValidationError);
        s = preset("sim1-ve0-s100");
        s.sampled_per_arm = 5000;
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }

    TEST_CASE("generation is deterministic in (spec, replicate)") {
        const auto spec = preset("sim1-ve50-s250");
        CHECK(to_csv(generate_trial(spec, 4)) == to_csv(generate_trial(spec, 4)));
        CHECK(to_csv(generate_trial(spec, 4)) != to_csv(generate_trial(spec, 5)));
    }

    TEST_CASE("base scenario geometry: about 195 cases and 6 measured records per case") {
        const auto spec = preset("sim1-ve0-s500");
        double cases = 0.0;
        const int reps = 5;
        for (int r = 0; r < reps; ++r) {
            const auto d = generate_trial(spec, static_cast<std::size_t>(r));
            std::size_t c = 0, measured_obs = 0, measured_arm[2] = {0, 0};
            for (const auto& rec : d.records) {
                if (rec.z == 1) {
                    c += rec.y.value() == 1;
                    measured_obs += rec.eps_s;
                } else {
                    measured_arm[rec.a] += rec.eps_s;
                }
            }
            CHECK(measured_obs == 6 * c);
            CHECK(measured_arm[0] == 500);
            CHECK(measured_arm[1] == 500);
            CHECK(d.n_obs() == 39000);
            CHECK(d.n_rct() == 6200);
            cases += static_cast<double>(c);
        }
        cases /= reps;
        const double expected = 0.005 * 39000;
        CHECK(std::abs(cases - expected) < 4.0 * std::sqrt(expected / reps) + 10.0);
    }

    TEST_CASE("VE = 0 preset: equal surrogate means across phase 3 arms") {
        const auto spec = preset("supp-ve0");
        const auto d = generate_trial(spec, 0);
        double sum[2] = {0, 0}, n[2] = {0, 0};
        for (const auto& r : d.records)
            if (r.z == 0) {
                sum[r.a] += r.s->front();
                n[r.a] += 1;
            }
        const double se = 0.15 * std::sqrt(1.0 / n[0] + 1.0 / n[1]);
        CHECK(std::abs(sum[0] / n[0] - sum[1] / n[1]) < 4.0 * se);
    }

    TEST_CASE("zero cases is an error that reports the seed") {
        auto spec = fixtures::small_spec(50, 20, 5);
        spec.beta[0] = -60.0;
        try {
            generate_trial(spec, 0);
            FAIL("expected an error");
        } catch (const EstimationError& e) {
            CHECK(std::string(e.what()).find(std::to_string(replicate_seed(spec, 0))) != std::string::npos);
        }
    }

    TEST_CASE("true parameters: base incidence near 0.005 and agreement with quadrature") {
        const auto base = preset("sim1-ve0-s500");
        const auto t = true_parameters(base, 1'000'000);
        CHECK(std::abs(t.theta0 - 0.005) <= 0.0005);
        CHECK(t.ve == 0.0);
        const double q0 = quadrature_risk(base, base.s_control);
        CHECK(t.theta0 == doctest::Approx(q0).epsilon(0.01));

        const auto ve50 = preset("sim1-ve50-s500");
        const auto t50 = true_parameters(ve50, 10'000'000);
        CHECK(std::abs(t50.ve - 0.5) <= 0.02);
        const double q1 = quadrature_risk(ve50, ve50.s_vaccine);
        CHECK(t50.theta1 == doctest::Approx(q1).epsilon(0.01));
        CHECK(t50.ve == doctest::Approx(1.0 - q1 / q0).epsilon(0.01));

        const auto ve90 = true_parameters(preset("sim1-ve90-s500"), 1'000'000);
        CHECK(std::abs(ve90.ve - 0.9) <= 0.02);
    }

    TEST_CASE("generated incidence is within 3 binomial SEs of the oracle for every preset") {
        for (const auto& name : preset_names()) {
            const auto spec = preset(name);
            const auto t = true_parameters(spec, 1'000'000);
            const auto d = generate_trial(spec, 0);
            double cases = 0, n = 0;
            for (const auto& r : d.records)
                if (r.z == 1) {
                    cases += r.y.value();
                    n += 1;
                }
            CAPTURE(name);
            CHECK(std::abs(cases / n - t.theta0) <= 3.0 * std::sqrt(t.theta0 * (1 - t.theta0) / n));
        }
    }

    TEST_CASE("replicate rows are reproducible and independent of the thread count") {
        auto spec = fixtures::small_spec();
        spec.replicates = 6;
        RunOptions one;
        one.threads = 1;
        RunOptions many = one;
        many.threads = 3;
        const auto a = run_replicates(spec, one);
        const auto b = run_replicates(spec, many);
        const auto c = run_replicates(spec, one);
        REQUIRE(a.rows.size() == 6);
        for (std::size_t r = 0; r < 6; ++r) {
            CHECK(a.rows[r].ok);
            CHECK(a.rows[r].theta0 == b.rows[r].theta0);
            CHECK(a.rows[r].theta1 == c.rows[r].theta1);
            CHECK(a.rows[r].se_sw_log == b.rows[r].se_sw_log);
            CHECK(a.rows[r].seed == c.rows[r].seed);
        }
    }

    TEST_CASE("bootstrap variance inside replicates is deterministic") {
        auto spec = fixtures::small_spec();
        spec.replicates = 2;
        RunOptions o;
        o.variance = VarianceKind::Both;
        o.bootstrap_b = 30;
        const auto a = run_replicates(spec, o);
        o.threads = 2;
        const auto b = run_replicates(spec, o);
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(std::isfinite(a.rows[r].se_bs_log));
            CHECK(a.rows[r].se_bs_log == b.rows[r].se_bs_log);
        }
    }

    TEST_CASE("aggregation: exact estimates give zero bias, zero SD and full coverage") {
        const TrueParameters truth{0.01, 0.005, 0.5};
        std::vector<ReplicateRow> rows(5);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            auto& row = rows[r];
            row.scenario = "exact";
            row.replicate = r;
            row.ok = true;
            row.theta0 = 0.01;
            row.theta1 = 0.005;
            row.ve = 0.5;
            row.log_one_minus_ve = std::log(0.5);
            row.ci_theta0 = {0.01, 0.01};
            row.ci_theta1 = {0.005, 0.005};
            row.ci_ve = {0.5, 0.5};
            row.success = true;
        }
        const auto m = aggregate_metrics(rows, truth);
        CHECK(m.ve.bias == 0.0);
        CHECK(m.theta0.bias == 0.0);
        CHECK(m.ve.sd == 0.0);
        CHECK(m.ve.coverage == 1.0);
        CHECK(m.theta1.coverage == 1.0);
        CHECK(m.success_probability == 1.0);
        CHECK_THROWS_AS(aggregate_metrics({}, truth), ValidationError);
    }

    TEST_CASE("aggregation is invariant to row order") {
        auto spec = fixtures::small_spec();
        spec.replicates = 8;
        const auto run = run_replicates(spec, {});
        const auto truth = true_parameters(spec, 1'000'000);
        const auto a = aggregate_metrics(run.rows, truth);
        auto shuffled = run.rows;
        std::mt19937 rng(3);
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto b = aggregate_metrics(shuffled, truth);
        CHECK(a.ve.mean == b.ve.mean);
        CHECK(a.ve.sd == b.ve.sd);
        CHECK(a.theta0.mean_se_sw == b.theta0.mean_se_sw);
        CHECK(a.ve.median == b.ve.median);
        CHECK(a.success_probability == b.success_probability);
        CHECK(a.ve.coverage == b.ve.coverage);
    }

    TEST_CASE("failed replicates are recorded; too many abort the scenario") {
        auto spec = fixtures::small_spec(300, 60, 3);
        spec.replicates = 10;
        spec.analysis_bias = {1.0, 0.0};  // theta0 < 0 for every replicate
        CHECK_THROWS_AS(run_replicates(spec, {}), EstimationError);
        RunOptions lenient;
        lenient.max_failure_fraction = 1.0;
        const auto run = run_replicates(spec, lenient);
        CHECK(run.failures == 10);
        CHECK_FALSE(run.rows[0].ok);
        CHECK_FALSE(run.rows[0].error.empty());
    }

    TEST_CASE("VE = 0 with zero bias: mean VE within 3 MC SEs of 0") {
        auto spec = preset("sim1-ve0-s500");
        spec.replicates = 60;
        const auto run = run_replicates(spec, {});
        const auto m = aggregate_metrics(run.rows, true_parameters(spec, 1'000'000));
        double ss = 0.0;
        for (const auto& r : run.rows) ss += (r.ve - m.ve.mean) * (r.ve - m.ve.mean);
        const double sd = std::sqrt(ss / static_cast<double>(run.rows.size() - 1));
        CHECK(std::abs(m.ve.mean) <= 3.0 * sd / std::sqrt(static_cast<double>(m.n_ok)));
    }
}
