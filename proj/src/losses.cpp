#include "confdepth/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "confdepth/errors.hpp"

namespace confdepth {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_same_shape(const FloatMap& a, const FloatMap& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": map shapes differ (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + ")");
    }
}

// log(max(d, eps)) and its derivative w.r.t. d (zero inside the clamp).
struct ClampedLog {
    double value;
    double slope;
};

ClampedLog clamped_log(double d, double eps) {
    if (d > eps) return {std::log(d), 1.0 / d};
    return {std::log(eps), 0.0};
}

// Per-pixel log residual on the joint valid mask of prediction, target and
// confidence.
struct LogResidual {
    std::vector<std::uint8_t> mask;
    std::vector<double> r;
    std::vector<double> dr_dpred;
};

LogResidual log_residual(const FloatMap& pred, const FloatMap& gt, const FloatMap& conf, double eps) {
    LogResidual out;
    out.mask.assign(pred.size(), 0);
    out.r.assign(pred.size(), 0.0);
    out.dr_dpred.assign(pred.size(), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred.valid(i) && gt.valid(i) && conf.valid(i))) continue;
        const ClampedLog lp = clamped_log(pred[i], eps);
        const ClampedLog lg = clamped_log(gt[i], eps);
        out.mask[i] = 1;
        out.r[i] = lp.value - lg.value;
        out.dr_dpred[i] = lp.slope;
    }
    return out;
}

}  // namespace

void LossConfig::validate() const {
    if (!(lambda_silog >= 0.0 && lambda_silog <= 1.0)) {
        throw ParameterError("loss: lambda_silog must lie in [0, 1]");
    }
    if (grad_scales.empty()) {
        throw ParameterError("loss: grad_scales must not be empty");
    }
    for (int s : grad_scales) {
        if (s < 1) throw ParameterError("loss: every grad scale must be >= 1");
    }
    if (!(bce_epsilon > 0.0 && bce_epsilon < 0.5) || !(log_epsilon > 0.0)) {
        throw ParameterError("loss: epsilons must be positive (bce_epsilon < 0.5)");
    }
    if (weight_silog < 0.0 || weight_grad < 0.0 || weight_edge < 0.0) {
        throw ParameterError("loss: term weights must be non-negative");
    }
}

double confidence_weight(const FloatMap& per_pixel_loss, const FloatMap& conf) {
    require_same_shape(per_pixel_loss, conf, "confidence_weight");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < per_pixel_loss.size(); ++i) {
        if (!per_pixel_loss.valid(i)) continue;
        ++n;
        if (conf.valid(i)) sum += conf[i] * per_pixel_loss[i];
    }
    if (n == 0) {
        throw EmptySupervisionError("confidence_weight: no valid pixels");
    }
    return sum / static_cast<double>(n);
}

LossTerm silog_conf(const FloatMap& pred, const FloatMap& gt, const FloatMap& conf, const LossConfig& cfg) {
    require_same_shape(pred, gt, "silog_conf");
    require_same_shape(pred, conf, "silog_conf");
    const LogResidual res = log_residual(pred, gt, conf, cfg.log_epsilon);

    double w = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!res.mask[i]) continue;
        const double p = conf[i];
        w += p;
        s1 += p * res.r[i];
        s2 += p * res.r[i] * res.r[i];
    }

    LossTerm out{0.0, FloatMap::like(pred)};
    if (w < 1e-12) {
        spdlog::warn("silog_conf: total confidence {:.3g} leaves no usable supervision", w);
        return out;
    }
    const double mean = s1 / w;
    out.value = s2 / w - cfg.lambda_silog * mean * mean;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!res.mask[i]) continue;
        out.grad[i] = conf[i] * (2.0 * res.r[i] - 2.0 * cfg.lambda_silog * mean) / w * res.dr_dpred[i];
    }
    return out;
}

LossTerm grad_match_conf(const FloatMap& pred, const FloatMap& gt, const FloatMap& conf, const LossConfig& cfg) {
    require_same_shape(pred, gt, "grad_match_conf");
    require_same_shape(pred, conf, "grad_match_conf");
    const LogResidual res = log_residual(pred, gt, conf, cfg.log_epsilon);
    const int width = pred.width();
    const int height = pred.height();

    LossTerm out{0.0, FloatMap::like(pred)};
    for (int s : cfg.grad_scales) {
        if (width < s || height < s) {
            spdlog::warn("grad_match_conf: {}x{} map is smaller than scale {}; scale skipped", width, height, s);
            continue;
        }
        const int ws = width / s;
        const int hs = height / s;
        const std::size_t blocks = static_cast<std::size_t>(ws) * static_cast<std::size_t>(hs);
        std::vector<double> r_pool(blocks, 0.0);
        std::vector<double> p_pool(blocks, 0.0);
        std::vector<int> count(blocks, 0);
        for (int by = 0; by < hs; ++by) {
            for (int bx = 0; bx < ws; ++bx) {
                const std::size_t b = static_cast<std::size_t>(by) * ws + bx;
                for (int y = by * s; y < (by + 1) * s; ++y) {
                    for (int x = bx * s; x < (bx + 1) * s; ++x) {
                        const std::size_t i = pred.index(x, y);
                        if (!res.mask[i]) continue;
                        r_pool[b] += res.r[i];
                        p_pool[b] += conf[i];
                        ++count[b];
                    }
                }
                if (count[b] > 0) r_pool[b] /= count[b];
                p_pool[b] /= static_cast<double>(s) * static_cast<double>(s);
            }
        }
        const auto n_valid = static_cast<std::size_t>(std::count_if(count.begin(), count.end(), [](int c) { return c > 0; }));
        if (n_valid == 0) continue;
        const double inv_n = 1.0 / static_cast<double>(n_valid);

        double acc = 0.0;
        std::vector<double> d_pool(blocks, 0.0);
        for (int by = 0; by < hs; ++by) {
            for (int bx = 0; bx < ws; ++bx) {
                const std::size_t b = static_cast<std::size_t>(by) * ws + bx;
                if (count[b] == 0) continue;
                if (bx + 1 < ws && count[b + 1] > 0) {
                    const double diff = r_pool[b + 1] - r_pool[b];
                    acc += p_pool[b] * std::abs(diff);
                    const double g = p_pool[b] * sign(diff) * inv_n;
                    d_pool[b + 1] += g;
                    d_pool[b] -= g;
                }
                if (by + 1 < hs && count[b + ws] > 0) {
                    const double diff = r_pool[b + ws] - r_pool[b];
                    acc += p_pool[b] * std::abs(diff);
                    const double g = p_pool[b] * sign(diff) * inv_n;
                    d_pool[b + ws] += g;
                    d_pool[b] -= g;
                }
            }
        }
        out.value += acc * inv_n;

        for (int by = 0; by < hs; ++by) {
            for (int bx = 0; bx < ws; ++bx) {
                const std::size_t b = static_cast<std::size_t>(by) * ws + bx;
                if (count[b] == 0 || d_pool[b] == 0.0) continue;
                const double per_pixel = d_pool[b] / count[b];
                for (int y = by * s; y < (by + 1) * s; ++y) {
                    for (int x = bx * s; x < (bx + 1) * s; ++x) {
                        const std::size_t i = pred.index(x, y);
                        if (res.mask[i]) out.grad[i] += per_pixel * res.dr_dpred[i];
                    }
                }
            }
        }
    }
    return out;
}

LossTerm edge_smooth_conf(const FloatMap& pred, const RgbImage& image, const FloatMap& conf, const LossConfig&) {
    require_same_shape(pred, conf, "edge_smooth_conf");
    if (image.width != pred.width() || image.height != pred.height()) {
        throw ShapeError("edge_smooth_conf: image and depth shapes differ");
    }
    const int width = pred.width();
    const int height = pred.height();
    const FloatMap intensity = grayscale(image);

    std::vector<std::uint8_t> mask(pred.size(), 0);
    double sum = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred.valid(i) && conf.valid(i)) {
            mask[i] = 1;
            sum += pred[i];
            ++m;
        }
    }
    if (m == 0) {
        throw EmptySupervisionError("edge_smooth_conf: no valid pixels");
    }
    const double mu = sum / static_cast<double>(m);
    if (!(mu > 0.0)) {
        throw InvalidDepthError("edge_smooth_conf: mean valid depth must be positive, got " + std::to_string(mu));
    }
    const double inv_n = 1.0 / static_cast<double>(m);

    // Derivatives w.r.t. the normalised depth first, then chain through the mean.
    std::vector<double> d_norm(pred.size(), 0.0);
    double acc = 0.0;
    auto pair_term = [&](std::size_t i, std::size_t j) {
        const double dn = pred[j] / mu - pred[i] / mu;
        const double atten = std::exp(-std::abs(intensity[j] - intensity[i]));
        acc += conf[i] * std::abs(dn) * atten;
        const double g = conf[i] * atten * sign(dn) * inv_n;
        d_norm[j] += g;
        d_norm[i] -= g;
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = pred.index(x, y);
            if (!mask[i]) continue;
            if (x + 1 < width && mask[i + 1]) pair_term(i, i + 1);
            if (y + 1 < height && mask[i + width]) pair_term(i, i + static_cast<std::size_t>(width));
        }
    }

    LossTerm out{acc * inv_n, FloatMap::like(pred)};
    double coupling = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask[i]) coupling += d_norm[i] * pred[i] / mu;
    }
    coupling /= static_cast<double>(m) * mu;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask[i]) out.grad[i] = d_norm[i] / mu - coupling;
    }
    return out;
}

LossBreakdown total_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& conf, const RgbImage& image,
                         const LossConfig& cfg) {
    cfg.validate();
    const LossTerm silog = silog_conf(pred, gt, conf, cfg);
    const LossTerm grad = grad_match_conf(pred, gt, conf, cfg);
    const LossTerm edge = edge_smooth_conf(pred, image, conf, cfg);

    LossBreakdown out;
    out.silog_conf = silog.value;
    out.grad_conf = grad.value;
    out.edge_conf = edge.value;
    out.total = cfg.weight_silog * silog.value + cfg.weight_grad * grad.value + cfg.weight_edge * edge.value;
    out.grad_wrt_pred = FloatMap::like(pred);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        out.grad_wrt_pred[i] =
            cfg.weight_silog * silog.grad[i] + cfg.weight_grad * grad.grad[i] + cfg.weight_edge * edge.grad[i];
    }
    return out;
}

LossTerm bce(const FloatMap& pred, const FloatMap& target, double epsilon) {
    require_same_shape(pred, target, "bce");
    LossTerm out{0.0, FloatMap::like(pred)};
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred.valid(i) && target.valid(i)) ++n;
    }
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred.valid(i) && target.valid(i))) continue;
        const double p = std::clamp(pred[i], epsilon, 1.0 - epsilon);
        const double t = target[i];
        acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
        if (pred[i] > epsilon && pred[i] < 1.0 - epsilon) {
            out.grad[i] = (-t / p + (1.0 - t) / (1.0 - p)) * inv_n;
        }
    }
    out.value = acc * inv_n;
    return out;
}

void to_json(nlohmann::json& j, const LossConfig& cfg) {
    j = nlohmann::json{{"lambda_silog", cfg.lambda_silog}, {"grad_scales", cfg.grad_scales},
                       {"bce_epsilon", cfg.bce_epsilon},   {"log_epsilon", cfg.log_epsilon},
                       {"weight_silog", cfg.weight_silog}, {"weight_grad", cfg.weight_grad},
                       {"weight_edge", cfg.weight_edge}};
}

void from_json(const nlohmann::json& j, LossConfig& cfg) {
    const LossConfig defaults;
    cfg.lambda_silog = j.value("lambda_silog", defaults.lambda_silog);
    cfg.grad_scales = j.value("grad_scales", defaults.grad_scales);
    cfg.bce_epsilon = j.value("bce_epsilon", defaults.bce_epsilon);
    cfg.log_epsilon = j.value("log_epsilon", defaults.log_epsilon);
    cfg.weight_silog = j.value("weight_silog", defaults.weight_silog);
    cfg.weight_grad = j.value("weight_grad", defaults.weight_grad);
    cfg.weight_edge = j.value("weight_edge", defaults.weight_edge);
    cfg.validate();
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
    j = nlohmann::json{
        {"silog_conf", b.silog_conf}, {"grad_conf", b.grad_conf}, {"edge_conf", b.edge_conf}, {"total", b.total}};
}

}  // namespace confdepth
