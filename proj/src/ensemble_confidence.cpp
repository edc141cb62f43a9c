#include "confdepth/ensemble_confidence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "confdepth/errors.hpp"

namespace confdepth {

EnsembleStats ensemble_mean_variance(const EnsembleDisparities& ensemble) {
    if (ensemble.members.empty()) {
        throw ValidationError("ensemble_mean_variance: ensemble has no members");
    }
    const FloatMap& first = ensemble.members.front();
    for (std::size_t k = 1; k < ensemble.k(); ++k) {
        if (!ensemble.members[k].same_shape(first)) {
            throw ShapeError("ensemble member " + std::to_string(k) + " is " +
                             std::to_string(ensemble.members[k].width()) + "x" +
                             std::to_string(ensemble.members[k].height()) + ", expected " +
                             std::to_string(first.width()) + "x" + std::to_string(first.height()));
        }
    }
    if (ensemble.k() == 1) {
        spdlog::warn("ensemble has a single member; variance is 0 and confidence 1 everywhere");
    }

    EnsembleStats stats{FloatMap(first.width(), first.height()), FloatMap(first.width(), first.height())};
    for (std::size_t i = 0; i < first.size(); ++i) {
        bool valid = true;
        for (const auto& m : ensemble.members) valid = valid && m.valid(i);
        if (!valid) {
            stats.mean.set_valid(i, false);
            stats.variance.set_valid(i, false);
            continue;
        }
        // Welford update; identical members give exactly zero variance.
        double mean = 0.0;
        double m2 = 0.0;
        double n = 0.0;
        for (const auto& m : ensemble.members) {
            n += 1.0;
            const double d = m[i] - mean;
            mean += d / n;
            m2 += d * (m[i] - mean);
        }
        stats.mean[i] = mean;
        stats.variance[i] = m2 / n;
    }
    return stats;
}

double effective_sigma(const SigmaPolicy& policy, int width) {
    if (!(policy.sigma_base > 0.0) || !(policy.ref_width > 0.0)) {
        throw ParameterError("sigma policy requires sigma_base > 0 and ref_width > 0");
    }
    if (width <= 0) {
        throw ParameterError("effective_sigma: width must be positive");
    }
    return policy.sigma_base * (static_cast<double>(width) / policy.ref_width);
}

FloatMap variance_to_confidence(const FloatMap& variance, double sigma_eff) {
    if (!(sigma_eff > 0.0) || !std::isfinite(sigma_eff)) {
        throw ParameterError("variance_to_confidence: sigma must be > 0, got " + std::to_string(sigma_eff));
    }
    const double denom = 2.0 * sigma_eff * sigma_eff;
    FloatMap conf(variance.width(), variance.height(), 0.0, true);
    for (std::size_t i = 0; i < variance.size(); ++i) {
        if (variance.valid(i)) {
            conf[i] = std::exp(-std::max(variance[i], 0.0) / denom);
        }
    }
    return conf;
}

}  // namespace confdepth
