#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "surrogate_bridge/data_model.hpp"

namespace sbridge {

/// Column-major numeric view of a validated dataset plus its design weights.
///
/// Rows align with `HarmonizedDataset::records`. Unmeasured surrogates are
/// stored as NaN so that accidental arithmetic on them cannot go unnoticed;
/// `y` is NaN on phase 3 rows. `pi` is the design sampling probability of the
/// row's stratum and `weight` is eps_s / pi.
struct AnalysisFrame {
    Eigen::MatrixXd x;
    Eigen::MatrixXd s;
    std::vector<int> z;
    std::vector<int> a;
    std::vector<int> eps;
    Eigen::VectorXd y;
    Eigen::VectorXd pi;
    Eigen::VectorXd weight;

    std::size_t rows() const { return z.size(); }
    std::size_t covariate_dim() const { return static_cast<std::size_t>(x.cols()); }
    std::size_t surrogate_dim() const { return static_cast<std::size_t>(s.cols()); }
    std::size_t n_rct() const;
    std::size_t n_obs() const;

    bool measured(std::size_t i) const { return eps[i] != 0; }
    bool observational(std::size_t i) const { return z[i] == 1; }

    /// Row gather; indices may repeat (bootstrap resamples).
    AnalysisFrame take(std::span<const std::size_t> rows) const;

    /// Stratum label used by the stratified bootstrap and the sampling model:
    /// 0 observational cases, 1 observational controls, 2 phase 3 arm 0,
    /// 3 phase 3 arm 1.
    int stratum(std::size_t i) const;
};

inline constexpr int kStrata = 4;

/// Validates `d` and builds the frame. Throws ValidationError on an invalid
/// dataset or a weight vector of the wrong length.
AnalysisFrame make_frame(const HarmonizedDataset& d, std::span<const double> pi);

/// Convenience: frame using the design's sampling probabilities.
AnalysisFrame make_frame(const HarmonizedDataset& d, const SamplingDesign& design);

}  // namespace sbridge
