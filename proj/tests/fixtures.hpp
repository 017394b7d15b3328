#pragma once

#include <random>
#include <string>

#include "surrogate_bridge/data_model.hpp"
#include "surrogate_bridge/frame.hpp"
#include "surrogate_bridge/simulation.hpp"

namespace fixtures {

// Common outcome (~10%) and a modest trial, so fits are well conditioned.
inline sbridge::ScenarioSpec small_spec(std::size_t n_obs = 1500, std::size_t n_arm = 300,
                                        std::optional<std::size_t> sampled = 120) {
    sbridge::ScenarioSpec s;
    s.name = "small";
    s.n_obs = n_obs;
    s.n_rct_per_arm = n_arm;
    s.x1_probability = 0.3;
    s.s_control = {0.0, 1.0};
    s.s_vaccine = {0.6, 1.0};
    s.beta = {0.2, -1.0, 0.5, -0.08, 0.3};
    s.control_ratio = 2;
    s.sampled_per_arm = sampled;
    s.replicates = 4;
    s.base_seed = 99;
    return s;
}

inline sbridge::AnalysisFrame small_frame(std::size_t replicate = 0, const sbridge::ScenarioSpec& spec = small_spec()) {
    const auto d = sbridge::generate_trial(spec, replicate);
    return sbridge::make_frame(d, sbridge::scenario_design(spec, d));
}

// Hand-built dataset with one covariate and complete surrogate measurement.
inline sbridge::HarmonizedDataset tiny_dataset(std::uint64_t seed, std::size_t n_obs, std::size_t n_arm) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nrm(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    sbridge::HarmonizedDataset d;
    d.covariate_names = {"x"};
    d.surrogate_names = {"s"};
    for (std::size_t i = 0; i < n_obs; ++i) {
        sbridge::ParticipantRecord r;
        r.id = "o" + std::to_string(i);
        r.z = 1;
        r.x = {nrm(rng)};
        const double s = 0.5 * r.x[0] + nrm(rng);
        r.eps_s = true;
        r.s = std::vector<double>{s};
        const double p = 1.0 / (1.0 + std::exp(-(-0.5 - 0.8 * s + 0.4 * r.x[0])));
        r.y = unit(rng) < p ? 1 : 0;
        d.records.push_back(r);
    }
    for (int arm = 0; arm < 2; ++arm)
        for (std::size_t i = 0; i < n_arm; ++i) {
            sbridge::ParticipantRecord r;
            r.id = "p" + std::to_string(arm) + "_" + std::to_string(i);
            r.z = 0;
            r.a = arm;
            r.x = {nrm(rng)};
            r.eps_s = true;
            r.s = std::vector<double>{0.5 * r.x[0] + 0.7 * arm + nrm(rng)};
            d.records.push_back(r);
        }
    return d;
}

}  // namespace fixtures
