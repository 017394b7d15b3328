#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "surrogate_bridge/analysis.hpp"
#include "surrogate_bridge/sensitivity.hpp"
#include "surrogate_bridge/simulation.hpp"

namespace sbridge {

/// Shortest decimal text that parses back to the same double.
std::string format_exact(double v);
/// Three significant digits for human-readable tables.
std::string format_short(double v);

void write_effect_estimates_csv(std::ostream& out, const AnalysisResult& result, double level);

void write_raw_replicates_csv(std::ostream& out, const std::vector<ReplicateRow>& rows);

void write_metrics_csv(std::ostream& out, const std::vector<ReplicateMetrics>& metrics);
std::vector<ReplicateMetrics> read_metrics_csv(std::istream& in);

/// Grouped per-scenario blocks with Bias, SE(sw), SE(bs), SD, Cov and SP.
void write_metrics_table(std::ostream& out, const std::vector<ReplicateMetrics>& metrics);

/// Median estimate and median CI bounds per scenario and parameter.
void write_plotdata_csv(std::ostream& out, const std::vector<ReplicateMetrics>& metrics);

void write_grid_csv(std::ostream& out, const SensitivityGrid& grid);
void write_sensitivity_report_csv(std::ostream& out, const SensitivityReport& report);

/// Writes `content` to `path` in one go; throws Error on I/O failure.
void write_file(const std::string& path, const std::string& content);

}  // namespace sbridge
