#include <doctest.h>

#include "fixtures.hpp"
#include "surrogate_bridge/analysis.hpp"
#include "surrogate_bridge/errors.hpp"
#include "surrogate_bridge/sensitivity.hpp"

using namespace sbridge;

namespace {

BiasPipeline frame_pipeline(const AnalysisFrame& f) {
    return [&f](const BiasSpecification& b) {
        AnalysisOptions o;
        o.bias = b;
        const auto r = analyze(f, o);
        return PointEstimate{r.estimate, r.primary().se_log_one_minus_ve};
    };
}

}  // namespace

TEST_SUITE("sensitivity") {
    TEST_CASE("PTE to bias magnitude") {
        CHECK(pte_to_bias(0.7, 0.005, 0.5) == doctest::Approx(0.00175));
        CHECK(pte_to_bias(0.7, 0.005, 1.0) == 0.0);
        CHECK(pte_to_bias(0.7, 0.005, 0.67) == doctest::Approx(0.001155));
        CHECK(pte_to_bias(0.7, 0.005, 0.83) == doctest::Approx(0.000595));
        CHECK_THROWS_AS(pte_to_bias(1.2, 0.005, 0.5), ValidationError);
        CHECK_THROWS_AS(pte_to_bias(0.7, 0.0, 0.5), ValidationError);
        CHECK_THROWS_AS(pte_to_bias(0.7, 0.005, 1.5), ValidationError);
    }

    TEST_CASE("colonization bound") {
        CHECK(colonization_bound(0.5, 0.0) == doctest::Approx(0.5));
        CHECK(colonization_bound(0.7, 0.1) == doctest::Approx(0.73));
        CHECK(colonization_bound(0.0, 0.0) == 0.0);
        CHECK_THROWS_AS(colonization_bound(1.0, 0.2), ValidationError);
        for (double a : {-2.0, -0.5, 0.0, 0.3, 0.9})
            for (double b : {-1.0, 0.0, 0.4, 0.8}) {
                CHECK(colonization_bound(a + 0.05, b) > colonization_bound(a, b));
                CHECK(colonization_bound(a, b + 0.05) > colonization_bound(a, b));
            }
    }

    TEST_CASE("grid builders") {
        const auto c = conservative_grid(0.0012, 3);
        REQUIRE(c.size() == 3);
        CHECK(c[0].u_ct == 0.0);
        CHECK(c[1].u_ct == doctest::Approx(0.0006));
        CHECK(c[2].u_ct == doctest::Approx(0.0012));
        const auto s = symmetric_grid(0.00175, 5);
        CHECK(s.front().u_ct == doctest::Approx(-0.00175));
        CHECK(s.back().u_ct == doctest::Approx(0.00175));
        CHECK(s[2].u_ct == doctest::Approx(0.0).scale(1.0));
    }

    TEST_CASE("single zero-bias point: degenerate ignorance interval, EUI is the point CI") {
        const auto f = fixtures::small_frame(0);
        const std::vector<BiasSpecification> grid{{}};
        const auto r = sweep_grid(frame_pipeline(f), grid);
        const auto& p = r.grid.points.front();
        CHECK(r.report.ignorance_interval.lower == p.estimate.ve);
        CHECK(r.report.ignorance_interval.upper == p.estimate.ve);
        CHECK(r.report.eui.lower == p.ve_ci.lower);
        CHECK(r.report.eui.upper == p.ve_ci.upper);
    }

    TEST_CASE("VE estimates decrease strictly in u_ct; EUI contains the ignorance interval") {
        const auto f = fixtures::small_frame(1);
        const auto grid = conservative_grid(0.02, 3);
        const auto r = sweep_grid(frame_pipeline(f), grid);
        REQUIRE(r.grid.points.size() == 3);
        CHECK(r.grid.points[0].estimate.ve > r.grid.points[1].estimate.ve);
        CHECK(r.grid.points[1].estimate.ve > r.grid.points[2].estimate.ve);
        CHECK(r.report.eui.lower <= r.report.ignorance_interval.lower);
        CHECK(r.report.eui.upper >= r.report.ignorance_interval.upper);
    }

    TEST_CASE("adding grid points never shrinks the intervals") {
        const auto f = fixtures::small_frame(2);
        auto grid = symmetric_grid(0.01, 3);
        const auto pipeline = frame_pipeline(f);
        auto prev = sweep_grid(pipeline, grid).report;
        for (double extra : {0.015, -0.02, 0.001}) {
            grid.push_back({0.0, extra});
            const auto next = sweep_grid(pipeline, grid).report;
            CHECK(next.ignorance_interval.lower <= prev.ignorance_interval.lower);
            CHECK(next.ignorance_interval.upper >= prev.ignorance_interval.upper);
            CHECK(next.eui.lower <= prev.eui.lower);
            CHECK(next.eui.upper >= prev.eui.upper);
            CHECK(next.eui.lower <= next.ignorance_interval.lower);
            CHECK(next.eui.upper >= next.ignorance_interval.upper);
            prev = next;
        }
    }

    TEST_CASE("a failing grid point aborts the sweep and is identified") {
        const auto f = fixtures::small_frame(0);
        const std::vector<BiasSpecification> grid{{0.0, 0.0}, {5.0, 0.0}};
        try {
            sweep_grid(frame_pipeline(f), grid);
            FAIL("expected an error");
        } catch (const EstimationError& e) {
            CHECK(std::string(e.what()).find("grid point 1") != std::string::npos);
        }
        CHECK_THROWS_AS(sweep_grid(frame_pipeline(f), std::vector<BiasSpecification>{}), ValidationError);
    }

    TEST_CASE("success criterion") {
        SensitivityReport r;
        r.eui = {0.35, 0.90};
        CHECK(evaluate_success(r, 0.3));
        r.eui = {0.29, 0.90};
        CHECK_FALSE(evaluate_success(r, 0.3));
        r.eui = {0.3, 0.9};
        CHECK(evaluate_success(r, 0.3));
        for (double lower : {-0.2, 0.1, 0.31, 0.6})
            for (double t : {0.0, 0.2, 0.3, 0.5, 0.7}) {
                r.eui = {lower, 0.9};
                if (evaluate_success(r, t))
                    for (double t2 : {t - 0.1, t - 0.01, t}) CHECK(evaluate_success(r, t2));
            }
    }
}
