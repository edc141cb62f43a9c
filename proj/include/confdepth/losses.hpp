#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "confdepth/maps.hpp"

namespace confdepth {

struct LossConfig {
    double lambda_silog = 0.5;
    std::vector<int> grad_scales{1, 2, 4, 8};
    double bce_epsilon = 1e-7;
    double log_epsilon = 1e-6;  // depths are clamped here before taking logs
    // Weights of the three terms in the total; unit by default.
    double weight_silog = 1.0;
    double weight_grad = 1.0;
    double weight_edge = 1.0;

    void validate() const;
};

/// Scalar loss value together with its gradient w.r.t. the prediction.
/// The gradient is zero on pixels that do not take part in the loss.
struct LossTerm {
    double value = 0.0;
    FloatMap grad;
};

struct LossBreakdown {
    double silog_conf = 0.0;
    double grad_conf = 0.0;
    double edge_conf = 0.0;
    double total = 0.0;
    FloatMap grad_wrt_pred;
};

/// Confidence-weighted mean (1/N) sum_i P(i) l(i) over the valid pixels of
/// `per_pixel_loss`.
double confidence_weight(const FloatMap& per_pixel_loss, const FloatMap& conf);

/// Scale-invariant log loss with confidence entering as normalised weighted
/// moments of g = log d_pred - log d_gt:
///   sum(P g^2)/W - lambda (sum(P g)/W)^2,   W = sum(P).
LossTerm silog_conf(const FloatMap& pred, const FloatMap& gt, const FloatMap& conf, const LossConfig& cfg);

/// Multi-scale gradient matching on the log-depth residual. At every scale
/// the residual, confidence and mask are average-pooled, and forward
/// differences of the pooled residual are penalised with L1 weighted by the
/// pooled confidence.
LossTerm grad_match_conf(const FloatMap& pred, const FloatMap& gt, const FloatMap& conf, const LossConfig& cfg);

/// Edge-aware smoothness of the mean-normalised prediction, attenuated by
/// exp(-|grad I|) of the grayscale image.
LossTerm edge_smooth_conf(const FloatMap& pred, const RgbImage& image, const FloatMap& conf, const LossConfig& cfg);

LossBreakdown total_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& conf, const RgbImage& image,
                         const LossConfig& cfg);

/// Mean binary cross-entropy. Predictions are clamped to [eps, 1-eps]; the
/// gradient is taken w.r.t. the unclamped prediction.
LossTerm bce(const FloatMap& pred, const FloatMap& target, double epsilon = 1e-7);

void to_json(nlohmann::json& j, const LossConfig& cfg);
void from_json(const nlohmann::json& j, LossConfig& cfg);
/// Scalar fields only; the gradient map is not serialised.
void to_json(nlohmann::json& j, const LossBreakdown& b);

}  // namespace confdepth
