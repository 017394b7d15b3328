#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sbridge {

enum class Study : int { Phase3 = 0, Observational = 1 };

/// One participant from either study.
///
/// `z` follows the convention 1 = observational, 0 = phase 3. The surrogate
/// `s` is present exactly when `eps_s` is set; there is no numeric sentinel
/// for an unmeasured surrogate. `t_tilde`/`delta` are only meaningful for
/// observational records, and `y` is the binary target outcome at the
/// dataset horizon (derived from `t_tilde`/`delta` when absent).
struct ParticipantRecord {
    std::string id;
    std::vector<double> x;
    int z = 0;
    int a = 0;
    bool eps_s = false;
    std::optional<std::vector<double>> s;
    std::optional<double> t_tilde;
    std::optional<bool> delta;
    std::optional<int> y;

    Study study() const { return z == 1 ? Study::Observational : Study::Phase3; }
};

/// Pooled records from the observational study and the phase 3 trial.
///
/// Records whose outcome cannot be derived at `t0` (censored before the
/// horizon) are only admissible when `allow_unknown_outcomes` is set, and no
/// estimator accepts such a dataset.
struct HarmonizedDataset {
    std::vector<ParticipantRecord> records;
    double t0 = 90.0;
    std::vector<std::string> covariate_names;
    std::vector<std::string> surrogate_names;
    bool allow_unknown_outcomes = false;

    std::size_t n_obs() const;
    std::size_t n_rct() const;
    std::size_t size() const { return records.size(); }
    std::size_t covariate_dim() const { return covariate_names.size(); }
    std::size_t surrogate_dim() const { return surrogate_names.size(); }
};

/// Two-phase design for measuring S.
///
/// Observational: every case plus a simple random sample of
/// `control_ratio * n_cases` controls (`nullopt`: every control measured).
/// Phase 3: per-arm simple random samples (`nullopt`: the whole arm).
struct SamplingDesign {
    std::optional<int> control_ratio;
    std::array<std::optional<std::size_t>, 2> rct_sampled;

    static SamplingDesign complete() { return {}; }
};

struct Violation {
    std::string record_id;  // empty for dataset-level violations
    std::string rule;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(const std::string& rule) const;
    std::string summary() const;
};

ValidationReport validate_dataset(const HarmonizedDataset& d);

/// Throws ValidationError carrying the report summary when `d` is invalid.
void require_valid(const HarmonizedDataset& d);

/// Binary outcome at horizon `t0`: 1 for an event by `t0`, 0 for full
/// event-free follow-up to `t0`, nullopt when censored before `t0`.
std::optional<int> derive_outcome(const ParticipantRecord& r, double t0);

/// Outcome of an observational record: the stored `y`, else the derived one.
std::optional<int> observational_outcome(const ParticipantRecord& r, double t0);

/// Per-record sampling probability pi of the record's design stratum,
/// defined for measured and unmeasured records alike.
std::vector<double> sampling_probabilities(const HarmonizedDataset& d, const SamplingDesign& design);

/// Per-record IPS weight eps_s / pi (0 for unmeasured records, so indices stay
/// aligned with `d.records`).
std::vector<double> compute_design_weights(const HarmonizedDataset& d, const SamplingDesign& design);

/// Design implied by the realised sample: per-arm measured counts, and the
/// control ratio when the measured controls are an integer multiple of the
/// cases. Throws ValidationError when no integer ratio fits.
SamplingDesign infer_design(const HarmonizedDataset& d);

// CSV interchange: id,z,a,eps_s,s_1..s_q,x_1..x_p,t_tilde,delta with a header.
HarmonizedDataset read_dataset_csv(std::istream& in, double t0);
HarmonizedDataset read_dataset_csv(const std::string& path, double t0);
void write_dataset_csv(std::ostream& out, const HarmonizedDataset& d);
void write_dataset_csv(const std::string& path, const HarmonizedDataset& d);

}  // namespace sbridge
