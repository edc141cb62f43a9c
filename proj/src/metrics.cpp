#include "confdepth/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "confdepth/errors.hpp"

namespace confdepth {

namespace {

void require_same_shape(const FloatMap& a, const FloatMap& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": prediction and ground truth shapes differ");
    }
}

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double valid_median(const FloatMap& map) {
    std::vector<double> values;
    values.reserve(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (map.valid(i)) values.push_back(map[i]);
    }
    if (values.empty()) {
        throw EmptyMaskError("median of a map without valid pixels");
    }
    return median_of(std::move(values));
}

FloatMap median_scale(const FloatMap& pred, const FloatMap& gt) {
    require_same_shape(pred, gt, "median_scale");
    std::vector<double> p;
    std::vector<double> g;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred.valid(i) && gt.valid(i)) {
            p.push_back(pred[i]);
            g.push_back(gt[i]);
        }
    }
    if (p.empty()) {
        throw EmptyMaskError("median_scale: no jointly valid pixels");
    }
    const double m_pred = median_of(std::move(p));
    const double m_gt = median_of(std::move(g));
    if (!(m_pred > 0.0) || !(m_gt > 0.0)) {
        throw ScalingError("median_scale: medians must be positive (pred " + std::to_string(m_pred) + ", gt " +
                           std::to_string(m_gt) + ")");
    }
    const double factor = m_gt / m_pred;
    FloatMap out = pred;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.valid(i)) out[i] = pred[i] * factor;
    }
    return out;
}

double compute_are(const FloatMap& pred, const FloatMap& gt) {
    require_same_shape(pred, gt, "compute_are");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred.valid(i) && gt.valid(i))) continue;
        if (!(gt[i] > 0.0)) {
            throw InvalidDepthError("compute_are: ground truth must be positive on valid pixels");
        }
        sum += std::abs(pred[i] - gt[i]) / gt[i];
        ++n;
    }
    if (n == 0) {
        throw EmptyMaskError("compute_are: no jointly valid pixels");
    }
    return sum / static_cast<double>(n);
}

double compute_delta1(const FloatMap& pred, const FloatMap& gt) {
    require_same_shape(pred, gt, "compute_delta1");
    std::size_t hits = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred.valid(i) && gt.valid(i))) continue;
        if (!(gt[i] > 0.0) || !(pred[i] > 0.0)) {
            throw InvalidDepthError("compute_delta1: depths must be positive on valid pixels");
        }
        ++n;
        if (std::max(pred[i] / gt[i], gt[i] / pred[i]) < 1.25) ++hits;
    }
    if (n == 0) {
        throw EmptyMaskError("compute_delta1: no jointly valid pixels");
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

DepthMetrics evaluate_depth(const FloatMap& pred, const FloatMap& gt, const FloatMap* eval_mask) {
    require_same_shape(pred, gt, "evaluate_depth");
    FloatMap restricted = pred;
    for (std::size_t i = 0; i < restricted.size(); ++i) {
        bool keep = pred.valid(i) && gt.valid(i);
        if (eval_mask) keep = keep && eval_mask->valid(i) && (*eval_mask)[i] != 0.0;
        restricted.set_valid(i, keep);
    }
    // Rounded to float32, the storage precision of depth maps.
    FloatMap scaled = median_scale(restricted, gt);
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        if (scaled.valid(i)) scaled[i] = static_cast<double>(static_cast<float>(scaled[i]));
    }
    return {compute_are(scaled, gt), compute_delta1(scaled, gt), restricted.count_valid()};
}

std::optional<double> sample_depth(const FloatMap& depth, double u, double v) {
    if (depth.empty() || u < 0.0 || v < 0.0 || u > depth.width() - 1 || v > depth.height() - 1) {
        return std::nullopt;
    }
    const int x0 = std::min(static_cast<int>(std::floor(u)), depth.width() - 1);
    const int y0 = std::min(static_cast<int>(std::floor(v)), depth.height() - 1);
    const int x1 = std::min(x0 + 1, depth.width() - 1);
    const int y1 = std::min(y0 + 1, depth.height() - 1);
    const double fx = u - x0;
    const double fy = v - y0;

    const std::array<std::array<int, 2>, 4> corners{{{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}}};
    const std::array<double, 4> weights{(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    bool all_valid = true;
    for (const auto& c : corners) all_valid = all_valid && depth.valid(c[0], c[1]);
    if (all_valid) {
        double z = 0.0;
        for (std::size_t k = 0; k < 4; ++k) z += weights[k] * depth(corners[k][0], corners[k][1]);
        return z;
    }
    std::optional<double> best;
    double best_d2 = 0.0;
    for (const auto& c : corners) {
        if (!depth.valid(c[0], c[1])) continue;
        const double d2 = (c[0] - u) * (c[0] - u) + (c[1] - v) * (c[1] - v);
        if (!best || d2 < best_d2) {
            best = depth(c[0], c[1]);
            best_d2 = d2;
        }
    }
    return best;
}

KeypointMetrics keypoint_metrics(const FloatMap& pred_depth, std::span<const StereoKeypoint> keypoints,
                                 const CameraRig& rig) {
    KeypointMetrics m;
    double err_sum = 0.0;
    std::size_t within = 0;
    for (const auto& kp : keypoints) {
        const std::optional<double> z = sample_depth(pred_depth, kp.u_left, kp.v_left);
        if (!z) {
            ++m.n_excluded;
            continue;
        }
        const double err = std::abs(*z - triangulate_keypoint(kp, rig).z_mm);
        err_sum += err;
        if (err <= 2.0) ++within;
        ++m.n;
    }
    if (m.n > 0) {
        m.mae_mm = err_sum / static_cast<double>(m.n);
        m.acc_2mm = static_cast<double>(within) / static_cast<double>(m.n);
    }
    return m;
}

double spearman_rho(const FloatMap& a, const FloatMap& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("spearman_rho: map shapes differ");
    }
    std::vector<double> xa;
    std::vector<double> xb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.valid(i) && b.valid(i)) {
            xa.push_back(a[i]);
            xb.push_back(b[i]);
        }
    }
    if (xa.size() < 2) {
        throw EmptyMaskError("spearman_rho: need at least two jointly valid pixels");
    }
    const std::vector<double> ra = average_ranks(xa);
    const std::vector<double> rb = average_ranks(xb);
    const double n = static_cast<double>(ra.size());
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void to_json(nlohmann::json& j, const DepthMetrics& m) {
    j = nlohmann::json{{"are", m.are}, {"delta1", m.delta1}, {"n_valid", m.n_valid}};
}

void to_json(nlohmann::json& j, const KeypointMetrics& m) {
    j = nlohmann::json{{"mae_mm", m.mae_mm}, {"acc_2mm", m.acc_2mm}, {"n", m.n}, {"n_excluded", m.n_excluded}};
}

}  // namespace confdepth
