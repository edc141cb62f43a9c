#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "confdepth/maps.hpp"
#include "confdepth/stereo_geometry.hpp"

namespace confdepth {

struct DepthMetrics {
    double are = 0.0;
    double delta1 = 0.0;
    std::size_t n_valid = 0;
};

struct KeypointMetrics {
    double mae_mm = 0.0;
    double acc_2mm = 0.0;
    std::size_t n = 0;
    std::size_t n_excluded = 0;  // keypoints with no valid depth nearby
};

/// Median over the valid pixels (mean of the two middle values for an even count).
double valid_median(const FloatMap& map);

/// pred scaled by median(gt)/median(pred), medians over the joint valid mask.
/// Pixels valid in pred but not in gt keep the scale applied and stay valid.
FloatMap median_scale(const FloatMap& pred, const FloatMap& gt);

/// Mean of |pred - gt| / gt over pixels valid in both.
double compute_are(const FloatMap& pred, const FloatMap& gt);

/// Fraction of jointly valid pixels with max(pred/gt, gt/pred) < 1.25.
double compute_delta1(const FloatMap& pred, const FloatMap& gt);

/// Median-scales pred against gt, rounds the result to float32, then ARE and
/// delta1. An optional mask restricts evaluation (and the medians) to pixels
/// where it is valid and non-zero.
DepthMetrics evaluate_depth(const FloatMap& pred, const FloatMap& gt, const FloatMap* eval_mask = nullptr);

/// Bilinear depth at (u, v). When any of the four neighbours is invalid the
/// nearest valid neighbour is used; std::nullopt when none is valid.
std::optional<double> sample_depth(const FloatMap& depth, double u, double v);

/// Metric depth error of `pred_depth` against triangulated keypoints.
KeypointMetrics keypoint_metrics(const FloatMap& pred_depth, std::span<const StereoKeypoint> keypoints,
                                 const CameraRig& rig);

/// Spearman rank correlation with average ranks for ties, over pixels valid
/// in both maps.
double spearman_rho(const FloatMap& a, const FloatMap& b);

void to_json(nlohmann::json& j, const DepthMetrics& m);
void to_json(nlohmann::json& j, const KeypointMetrics& m);

}  // namespace confdepth
