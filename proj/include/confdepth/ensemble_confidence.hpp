#pragma once

#include <vector>

#include "confdepth/maps.hpp"

namespace confdepth {

/// K disparity maps of one frame, one per ensemble member.
struct EnsembleDisparities {
    std::vector<FloatMap> members;

    std::size_t k() const noexcept { return members.size(); }
};

/// Per-pixel ensemble mean and population variance. Pixels that are invalid
/// in any member are invalid in both maps.
struct EnsembleStats {
    FloatMap mean;
    FloatMap variance;
};

/// Maps image width to the sigma used by the variance-to-confidence curve.
/// Disparities grow linearly with image width, so sigma does too.
struct SigmaPolicy {
    double sigma_base = 0.7;
    double ref_width = 518.0;
};

EnsembleStats ensemble_mean_variance(const EnsembleDisparities& ensemble);

/// sigma_base * width / ref_width.
double effective_sigma(const SigmaPolicy& policy, int width);

/// Confidence exp(-var / (2 sigma^2)). The returned map is valid everywhere;
/// pixels with invalid variance get confidence 0.
FloatMap variance_to_confidence(const FloatMap& variance, double sigma_eff);

}  // namespace confdepth
