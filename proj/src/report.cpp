#include "surrogate_bridge/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "surrogate_bridge/errors.hpp"

namespace sbridge {

std::string format_exact(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_short(double v) {
    if (std::isnan(v)) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

namespace {

double parse_double(const std::string& s) {
    if (s == "NA") return std::nan("");
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw ValidationError("bad number '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class... T>
void row(std::ostream& out, const T&... cells) {
    bool first = true;
    ((out << (first ? "" : ",") << cells, first = false), ...);
    out << '\n';
}

const char* kParams[3] = {"theta0", "theta1", "ve"};

const ParameterMetrics& param(const ReplicateMetrics& m, int k) {
    return k == 0 ? m.theta0 : k == 1 ? m.theta1 : m.ve;
}
ParameterMetrics& param(ReplicateMetrics& m, int k) { return k == 0 ? m.theta0 : k == 1 ? m.theta1 : m.ve; }

void require_nonempty(bool empty, const char* what) {
    if (empty) throw Error(std::string(what) + ": no results to write");
}

}  // namespace

void write_effect_estimates_csv(std::ostream& out, const AnalysisResult& result, double level) {
    row(out, "method", "u_uc", "u_ct", "theta0", "theta1", "ve", "log_one_minus_ve", "variance", "se_theta0",
        "se_theta1", "se_log_one_minus_ve", "ci_theta0_lower", "ci_theta0_upper", "ci_theta1_lower",
        "ci_theta1_upper", "ci_ve_lower", "ci_ve_upper", "level", "b_reps", "discarded_resamples");
    const auto& e = result.estimate;
    auto emit = [&](const VarianceReport& v) {
        const auto c0 = wald_interval(e.theta0, v.se_theta0, level);
        const auto c1 = wald_interval(e.theta1, v.se_theta1, level);
        const auto cv = wald_interval_ve(e, v.se_log_one_minus_ve, level);
        row(out, to_string(e.method), format_exact(e.bias.u_uc), format_exact(e.bias.u_ct), format_exact(e.theta0),
            format_exact(e.theta1), format_exact(e.ve), format_exact(e.log_one_minus_ve), to_string(v.method),
            format_exact(v.se_theta0), format_exact(v.se_theta1), format_exact(v.se_log_one_minus_ve),
            format_exact(c0.lower), format_exact(c0.upper), format_exact(c1.lower), format_exact(c1.upper),
            format_exact(cv.lower), format_exact(cv.upper), format_exact(level), v.b_reps, v.discarded_resamples);
    };
    require_nonempty(!result.analytic && !result.bootstrap, "effect estimates");
    if (result.analytic) emit(*result.analytic);
    if (result.bootstrap) emit(*result.bootstrap);
}

void write_raw_replicates_csv(std::ostream& out, const std::vector<ReplicateRow>& rows) {
    require_nonempty(rows.empty(), "raw replicates");
    row(out, "scenario", "replicate", "seed", "ok", "theta0", "theta1", "ve", "log_one_minus_ve", "se_sw_theta0",
        "se_sw_theta1", "se_sw_log", "se_bs_theta0", "se_bs_theta1", "se_bs_log", "ci_theta0_lower",
        "ci_theta0_upper", "ci_theta1_lower", "ci_theta1_upper", "ci_ve_lower", "ci_ve_upper", "success", "n_cases",
        "error");
    for (const auto& r : rows) {
        std::string err = r.error;
        for (auto& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        if (!r.ok) {
            row(out, r.scenario, r.replicate, r.seed, 0, "NA", "NA", "NA", "NA", "NA", "NA", "NA", "NA", "NA", "NA",
                "NA", "NA", "NA", "NA", "NA", "NA", 0, r.n_cases, err);
            continue;
        }
        row(out, r.scenario, r.replicate, r.seed, 1, format_exact(r.theta0), format_exact(r.theta1),
            format_exact(r.ve), format_exact(r.log_one_minus_ve), format_exact(r.se_sw_theta0),
            format_exact(r.se_sw_theta1), format_exact(r.se_sw_log), format_exact(r.se_bs_theta0),
            format_exact(r.se_bs_theta1), format_exact(r.se_bs_log), format_exact(r.ci_theta0.lower),
            format_exact(r.ci_theta0.upper), format_exact(r.ci_theta1.lower), format_exact(r.ci_theta1.upper),
            format_exact(r.ci_ve.lower), format_exact(r.ci_ve.upper), r.success ? 1 : 0, r.n_cases, err);
    }
}

namespace {
const std::vector<std::string> kMetricsHeader{"scenario", "parameter", "n_ok", "n_failed", "truth", "mean", "bias",
                                              "se_sw", "se_bs", "sd", "coverage", "sp"};
}

void write_metrics_csv(std::ostream& out, const std::vector<ReplicateMetrics>& metrics) {
    require_nonempty(metrics.empty(), "metrics");
    for (std::size_t k = 0; k < kMetricsHeader.size(); ++k) out << (k ? "," : "") << kMetricsHeader[k];
    out << '\n';
    for (const auto& m : metrics)
        for (int k = 0; k < 3; ++k) {
            const auto& p = param(m, k);
            row(out, m.scenario, kParams[k], m.n_ok, m.n_failed, format_exact(p.truth), format_exact(p.mean),
                format_exact(p.bias), format_exact(p.mean_se_sw), format_exact(p.mean_se_bs), format_exact(p.sd),
                format_exact(p.coverage), format_exact(m.success_probability));
        }
}

std::vector<ReplicateMetrics> read_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || split(line) != kMetricsHeader) throw ValidationError("metrics CSV: bad header");
    std::vector<ReplicateMetrics> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split(line);
        if (c.size() != kMetricsHeader.size()) throw ValidationError("metrics CSV: bad row '" + line + "'");
        int k = -1;
        for (int j = 0; j < 3; ++j)
            if (c[1] == kParams[j]) k = j;
        if (k < 0) throw ValidationError("metrics CSV: unknown parameter '" + c[1] + "'");
        if (out.empty() || out.back().scenario != c[0] || k == 0) {
            out.emplace_back();
            out.back().scenario = c[0];
        }
        auto& m = out.back();
        m.n_ok = std::stoul(c[2]);
        m.n_failed = std::stoul(c[3]);
        auto& p = param(m, k);
        p.truth = parse_double(c[4]);
        p.mean = parse_double(c[5]);
        p.bias = parse_double(c[6]);
        p.mean_se_sw = parse_double(c[7]);
        p.mean_se_bs = parse_double(c[8]);
        p.sd = parse_double(c[9]);
        p.coverage = parse_double(c[10]);
        m.success_probability = parse_double(c[11]);
    }
    if (out.empty()) throw ValidationError("metrics CSV: no rows");
    return out;
}

void write_metrics_table(std::ostream& out, const std::vector<ReplicateMetrics>& metrics) {
    require_nonempty(metrics.empty(), "metrics table");
    char buf[256];
    for (const auto& m : metrics) {
        out << m.scenario << "  (replicates ok " << m.n_ok << ", failed " << m.n_failed << ")\n";
        std::snprintf(buf, sizeof buf, "  %-8s %10s %10s %10s %10s %10s %6s %6s\n", "Param", "Truth", "Bias",
                      "SE(sw)", "SE(bs)", "SD", "Cov", "SP");
        out << buf;
        for (int k = 0; k < 3; ++k) {
            const auto& p = param(m, k);
            std::snprintf(buf, sizeof buf, "  %-8s %10s %10s %10s %10s %10s %6s %6s\n", kParams[k],
                          format_short(p.truth).c_str(), format_short(p.bias).c_str(),
                          format_short(p.mean_se_sw).c_str(), format_short(p.mean_se_bs).c_str(),
                          format_short(p.sd).c_str(), format_short(p.coverage).c_str(),
                          k == 2 ? format_short(m.success_probability).c_str() : "");
            out << buf;
        }
        out << '\n';
    }
}

void write_plotdata_csv(std::ostream& out, const std::vector<ReplicateMetrics>& metrics) {
    require_nonempty(metrics.empty(), "plot data");
    row(out, "scenario", "parameter", "truth", "median_estimate", "median_ci_lower", "median_ci_upper");
    for (const auto& m : metrics)
        for (int k = 0; k < 3; ++k) {
            const auto& p = param(m, k);
            row(out, m.scenario, kParams[k], format_exact(p.truth), format_exact(p.median),
                format_exact(p.median_lower), format_exact(p.median_upper));
        }
}

void write_grid_csv(std::ostream& out, const SensitivityGrid& grid) {
    require_nonempty(grid.points.empty(), "sensitivity grid");
    row(out, "u_uc", "u_ct", "theta0", "theta1", "ve", "se_log_one_minus_ve", "ci_ve_lower", "ci_ve_upper");
    for (const auto& p : grid.points)
        row(out, format_exact(p.bias.u_uc), format_exact(p.bias.u_ct), format_exact(p.estimate.theta0),
            format_exact(p.estimate.theta1), format_exact(p.estimate.ve), format_exact(p.se_log_one_minus_ve),
            format_exact(p.ve_ci.lower), format_exact(p.ve_ci.upper));
}

void write_sensitivity_report_csv(std::ostream& out, const SensitivityReport& r) {
    row(out, "ignorance_lower", "ignorance_upper", "eui_lower", "eui_upper", "threshold", "success");
    row(out, format_exact(r.ignorance_interval.lower), format_exact(r.ignorance_interval.upper),
        format_exact(r.eui.lower), format_exact(r.eui.upper), format_exact(r.threshold), r.success ? 1 : 0);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    f << content;
    if (!f) throw Error("write to '" + path + "' failed");
}

}  // namespace sbridge
