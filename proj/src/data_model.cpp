#include "surrogate_bridge/data_model.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "surrogate_bridge/errors.hpp"

namespace sbridge {

std::size_t HarmonizedDataset::n_obs() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.z == 1;
    return n;
}

std::size_t HarmonizedDataset::n_rct() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.z == 0;
    return n;
}

bool ValidationReport::has(const std::string& rule) const {
    for (const auto& v : violations)
        if (v.rule == rule) return true;
    return false;
}

std::string ValidationReport::summary() const {
    if (ok()) return "pass";
    std::ostringstream os;
    os << violations.size() << " violation(s):";
    std::size_t shown = 0;
    for (const auto& v : violations) {
        if (shown++ == 20) {
            os << " ...";
            break;
        }
        os << " [" << (v.record_id.empty() ? "dataset" : "record " + v.record_id) << ": " << v.rule << "]";
    }
    return os.str();
}

std::optional<int> derive_outcome(const ParticipantRecord& r, double t0) {
    if (r.z != 1) throw ValidationError("derive_outcome: record " + r.id + " is not observational");
    if (!r.t_tilde || !r.delta)
        throw ValidationError("derive_outcome: record " + r.id + " lacks follow-up time or event indicator");
    const double t = *r.t_tilde;
    if (*r.delta && t <= t0) return 1;
    if (!*r.delta && t == t0) return 0;
    // Follow-up beyond the horizon without an event still settles Y = 0.
    if (!*r.delta && t > t0) return 0;
    if (*r.delta && t > t0) return 0;
    return std::nullopt;
}

std::optional<int> observational_outcome(const ParticipantRecord& r, double t0) {
    if (r.y) return r.y;
    if (!r.t_tilde || !r.delta) return std::nullopt;
    return derive_outcome(r, t0);
}

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double e : v)
        if (!std::isfinite(e)) return false;
    return true;
}

}  // namespace

ValidationReport validate_dataset(const HarmonizedDataset& d) {
    ValidationReport rep;
    auto flag = [&](const std::string& id, const std::string& rule) { rep.violations.push_back({id, rule}); };

    if (d.records.empty()) {
        flag("", "empty dataset");
        return rep;
    }
    if (d.n_obs() == 0) flag("", "no observational records");
    if (d.n_rct() == 0) flag("", "no phase 3 records");
    if (!(d.t0 > 0) || !std::isfinite(d.t0)) flag("", "horizon t0 must be positive");

    const std::size_t p = d.covariate_dim();
    const std::size_t q = d.surrogate_dim();
    std::unordered_set<std::string> ids;
    ids.reserve(d.records.size());

    for (const auto& r : d.records) {
        if (!ids.insert(r.id).second) flag(r.id, "duplicate id");
        if (r.z != 0 && r.z != 1) flag(r.id, "invalid study indicator");
        if (r.a != 0 && r.a != 1) flag(r.id, "invalid treatment");
        if (r.z == 1 && r.a == 1) flag(r.id, "observational record treated");
        if (r.x.size() != p) flag(r.id, "covariate dimension mismatch");
        if (!all_finite(r.x)) flag(r.id, "non-finite covariate");
        if (r.eps_s && !r.s) flag(r.id, "surrogate missing");
        if (!r.eps_s && r.s) flag(r.id, "surrogate present without measurement flag");
        if (r.s) {
            if (r.s->size() != q) flag(r.id, "surrogate dimension mismatch");
            if (!all_finite(*r.s)) flag(r.id, "non-finite surrogate");
        }
        if (r.z != 1) continue;

        if (r.t_tilde && *r.t_tilde < 0) flag(r.id, "negative follow-up time");
        std::optional<int> derived;
        if (r.t_tilde && r.delta && *r.t_tilde >= 0) derived = derive_outcome(r, d.t0);
        if (r.y) {
            if (*r.y != 0 && *r.y != 1) flag(r.id, "invalid outcome");
            if (derived && *derived != *r.y) flag(r.id, "outcome inconsistent with follow-up");
        } else if (!r.t_tilde || !r.delta) {
            flag(r.id, "outcome missing");
        } else if (!derived && !d.allow_unknown_outcomes) {
            flag(r.id, "censored before horizon");
        }
    }
    return rep;
}

void require_valid(const HarmonizedDataset& d) {
    const auto rep = validate_dataset(d);
    if (!rep.ok()) throw ValidationError("invalid dataset: " + rep.summary());
}

namespace {

struct StratumCounts {
    std::size_t cases = 0, controls = 0, sampled_cases = 0, sampled_controls = 0;
    std::array<std::size_t, 2> arm{0, 0};
    std::array<std::size_t, 2> arm_sampled{0, 0};
};

StratumCounts count_strata(const HarmonizedDataset& d) {
    StratumCounts c;
    for (const auto& r : d.records) {
        if (r.z == 1) {
            const auto y = observational_outcome(r, d.t0);
            if (!y)
                throw ValidationError("record " + r.id + ": observational outcome unknown at horizon; "
                                      "censored records are not supported by the estimators");
            if (*y == 1) {
                ++c.cases;
                c.sampled_cases += r.eps_s;
            } else {
                ++c.controls;
                c.sampled_controls += r.eps_s;
            }
        } else {
            const auto arm = static_cast<std::size_t>(r.a == 1);
            ++c.arm[arm];
            c.arm_sampled[arm] += r.eps_s;
        }
    }
    return c;
}

}  // namespace

std::vector<double> sampling_probabilities(const HarmonizedDataset& d, const SamplingDesign& design) {
    const auto c = count_strata(d);
    double pi_case = 1.0;
    double pi_control = 1.0;
    if (design.control_ratio) {
        if (*design.control_ratio < 1) throw ValidationError("control ratio must be a positive integer");
        if (c.cases == 0) throw ValidationError("case-control design with zero observational cases");
        if (c.controls > 0) {
            pi_control = static_cast<double>(*design.control_ratio) * static_cast<double>(c.cases) /
                         static_cast<double>(c.controls);
            if (pi_control > 1.0)
                throw ValidationError("case-control design asks for more controls than were enrolled");
        }
    }
    std::array<double, 2> pi_arm{1.0, 1.0};
    for (std::size_t arm = 0; arm < 2; ++arm) {
        if (!design.rct_sampled[arm]) continue;
        const auto m = *design.rct_sampled[arm];
        if (c.arm[arm] == 0) continue;
        if (m == 0) throw ValidationError("phase 3 arm " + std::to_string(arm) + " has zero sampled records");
        if (m > c.arm[arm])
            throw ValidationError("phase 3 arm " + std::to_string(arm) + " sample exceeds enrollment");
        pi_arm[arm] = static_cast<double>(m) / static_cast<double>(c.arm[arm]);
    }

    std::vector<double> pi(d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        if (r.z == 1)
            pi[i] = *observational_outcome(r, d.t0) == 1 ? pi_case : pi_control;
        else
            pi[i] = pi_arm[r.a == 1];
    }
    return pi;
}

std::vector<double> compute_design_weights(const HarmonizedDataset& d, const SamplingDesign& design) {
    auto w = sampling_probabilities(d, design);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = d.records[i].eps_s ? 1.0 / w[i] : 0.0;
    return w;
}

SamplingDesign infer_design(const HarmonizedDataset& d) {
    const auto c = count_strata(d);
    SamplingDesign design;
    if (c.sampled_cases != c.cases && c.cases > 0)
        throw ValidationError("observational design: not every case has S measured; supply the design explicitly");
    if (c.sampled_controls != c.controls) {
        if (c.cases == 0) throw ValidationError("observational design: zero cases");
        if (c.sampled_controls == 0) throw ValidationError("observational design: no measured controls");
        if (c.sampled_controls % c.cases != 0)
            throw ValidationError("observational design: measured controls (" + std::to_string(c.sampled_controls) +
                                  ") are not an integer multiple of cases (" + std::to_string(c.cases) +
                                  "); supply control_ratio explicitly");
        design.control_ratio = static_cast<int>(c.sampled_controls / c.cases);
    }
    for (std::size_t arm = 0; arm < 2; ++arm)
        if (c.arm_sampled[arm] != c.arm[arm]) design.rct_sampled[arm] = c.arm_sampled[arm];
    return design;
}

}  // namespace sbridge
