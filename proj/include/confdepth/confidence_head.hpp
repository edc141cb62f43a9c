#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "confdepth/maps.hpp"

namespace confdepth {

inline constexpr int kHeadHidden = 32;

/// Weights of the two-layer confidence head: a 3x3 convolution to 32 channels
/// with ReLU, then a 1x1 convolution to one channel squashed by a sigmoid.
///
/// w1 is laid out [ky][kx][c_in][hidden] and w2 is [hidden].
struct HeadParams {
    int c_in = 0;
    std::vector<float> w1;
    std::vector<float> b1;
    std::vector<float> w2;
    float b2 = 0.0f;

    HeadParams() = default;
    explicit HeadParams(int channels_in);

    std::size_t w1_index(int ky, int kx, int c, int k) const noexcept {
        return ((static_cast<std::size_t>(ky) * 3 + static_cast<std::size_t>(kx)) * static_cast<std::size_t>(c_in) +
                static_cast<std::size_t>(c)) *
                   kHeadHidden +
               static_cast<std::size_t>(k);
    }

    /// Uniform in +-1/sqrt(fan_in) per layer, deterministic for a seed.
    static HeadParams initialize(int channels_in, std::uint64_t seed);

    friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

/// Gradients of a scalar loss w.r.t. the head parameters and its input.
struct HeadGrads {
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;
    FeatureMap features;
};

/// Confidence in (0,1) for every pixel of `features`.
FloatMap head_forward(const FeatureMap& features, const HeadParams& params);

/// Backpropagates `upstream` (dL/d output) through the head.
HeadGrads head_backward(const FeatureMap& features, const HeadParams& params, const FloatMap& upstream);

struct HeadSample {
    FeatureMap features;
    FloatMap target;
};

struct HeadTrainConfig {
    double lr = 0.5;
    int epochs = 500;
    std::uint64_t seed = 0;
    double bce_epsilon = 1e-7;
};

struct HeadTrainResult {
    HeadParams params;
    std::vector<double> loss_curve;  // mean BCE at the start of each epoch, plus the final value
};

/// Full-batch gradient descent on the mean per-sample BCE.
HeadTrainResult train_head(const std::vector<HeadSample>& samples, const HeadTrainConfig& cfg);
/// Same, starting from `init` instead of a seeded initialisation.
HeadTrainResult train_head(const std::vector<HeadSample>& samples, const HeadTrainConfig& cfg, HeadParams init);

inline constexpr int kEngineeredChannels = 4;

/// Per-pixel inputs for the head when no learned decoder is available:
/// grayscale intensity, 3x3 intensity variance, gradient magnitude of the
/// intensity and log(1 + 3x3 mean of the ensemble variance / sigma^2).
FeatureMap engineered_features(const RgbImage& image, const FloatMap& ensemble_variance, double sigma_eff);

/// Flat little-endian float32 blob (w1, b1, w2, b2) plus a JSON sidecar.
void save_head(const HeadParams& params, const std::filesystem::path& bin_path);
HeadParams load_head(const std::filesystem::path& bin_path);

}  // namespace confdepth
