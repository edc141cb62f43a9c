#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "confdepth/errors.hpp"
#include "confdepth/losses.hpp"
#include "gradcheck.hpp"

using namespace confdepth;

namespace {

struct Instance {
    FloatMap pred, gt, conf;
    RgbImage image;
};

Instance random_instance(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    Instance in;
    in.gt = oracle::random_map(w, h, 50.0, 200.0, rng);
    in.pred = oracle::random_map(w, h, 50.0, 200.0, rng);
    in.conf = oracle::random_map(w, h, 0.0, 1.0, rng);
    in.image = oracle::random_image(w, h, rng);
    in.pred.set_valid(3, false);
    in.gt.set_valid(7, false);
    return in;
}

}  // namespace

TEST(ConfidenceWeight, Examples) {
    FloatMap l(3, 1);
    l[0] = 1.0;
    l[1] = 2.0;
    l[2] = 3.0;
    EXPECT_DOUBLE_EQ(confidence_weight(l, FloatMap(3, 1, 1.0)), 2.0);
    EXPECT_EQ(confidence_weight(l, FloatMap(3, 1, 0.0)), 0.0);
    FloatMap p(3, 1);
    p[0] = 1.0;
    p[1] = 0.5;
    p[2] = 0.0;
    EXPECT_NEAR(confidence_weight(l, p), 2.0 / 3.0, 1e-15);
    EXPECT_THROW(confidence_weight(FloatMap(2, 1, 0.0, false), FloatMap(2, 1, 1.0)), EmptySupervisionError);
    EXPECT_THROW(confidence_weight(l, FloatMap(2, 1, 1.0)), ShapeError);
}

TEST(ConfidenceWeight, UniformScalingIsLinear) {
    Rng rng(4);
    const FloatMap l = oracle::random_map(9, 7, 0.0, 5.0, rng);
    const double base = confidence_weight(l, FloatMap(9, 7, 1.0));
    for (double c : {0.0, 0.25, 0.5, 1.0}) {
        const double v = confidence_weight(l, FloatMap(9, 7, c));
        EXPECT_LE(std::fabs(v - c * base), 1e-12 * std::fabs(c * base));
    }
}

TEST(Silog, Identities) {
    const Instance in = random_instance(8, 8, 1);
    const LossConfig cfg;
    const LossTerm zero = silog_conf(in.gt, in.gt, in.conf, cfg);
    EXPECT_EQ(zero.value, 0.0);
    for (std::size_t i = 0; i < zero.grad.size(); ++i) EXPECT_EQ(zero.grad[i], 0.0);

    FloatMap e_gt = in.gt;
    for (std::size_t i = 0; i < e_gt.size(); ++i) e_gt[i] *= std::numbers::e;
    EXPECT_NEAR(silog_conf(e_gt, in.gt, in.conf, cfg).value, 0.5, 1e-9);

    LossConfig full = cfg;
    full.lambda_silog = 1.0;
    EXPECT_NEAR(silog_conf(e_gt, in.gt, in.conf, full).value, 0.0, 1e-12);
}

TEST(Silog, ZeroConfidenceGuard) {
    const Instance in = random_instance(6, 6, 2);
    const LossTerm t = silog_conf(in.pred, in.gt, FloatMap(6, 6, 0.0), LossConfig{});
    EXPECT_EQ(t.value, 0.0);
    for (std::size_t i = 0; i < t.grad.size(); ++i) EXPECT_EQ(t.grad[i], 0.0);
}

TEST(Silog, FiniteDifferences) {
    const LossConfig cfg;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Instance in = random_instance(8, 8, 100 + seed);
        const LossTerm t = silog_conf(in.pred, in.gt, in.conf, cfg);
        const auto r = oracle::check_map_gradient(
            [&](const FloatMap& d) { return silog_conf(d, in.gt, in.conf, cfg).value; }, in.pred, t.grad);
        EXPECT_LT(r.max_rel, 1e-5);
        EXPECT_GT(r.checked, 50u);
        EXPECT_EQ(t.grad[3], 0.0);
        EXPECT_EQ(t.grad[7], 0.0);
    }
}

TEST(GradMatch, Identities) {
    const Instance in = random_instance(16, 16, 3);
    const LossConfig cfg;
    EXPECT_EQ(grad_match_conf(in.gt, in.gt, in.conf, cfg).value, 0.0);
    for (double c : {0.3, 2.0, 7.5}) {
        FloatMap scaled = in.gt;
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= c;
        EXPECT_NEAR(grad_match_conf(scaled, in.gt, in.conf, cfg).value, 0.0, 1e-12);
    }
}

TEST(GradMatch, SmallMapSkipsScale) {
    const Instance in = random_instance(6, 6, 4);
    LossConfig only8;
    only8.grad_scales = {8};
    EXPECT_EQ(grad_match_conf(in.pred, in.gt, in.conf, only8).value, 0.0);
}

TEST(GradMatch, FiniteDifferences) {
    const LossConfig cfg;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Instance in = random_instance(16, 16, 200 + seed);
        const LossTerm t = grad_match_conf(in.pred, in.gt, in.conf, cfg);
        const auto r = oracle::check_map_gradient(
            [&](const FloatMap& d) { return grad_match_conf(d, in.gt, in.conf, cfg).value; }, in.pred, t.grad);
        EXPECT_LT(r.max_rel, 1e-5);
        EXPECT_GT(r.checked, 200u);
    }
}

TEST(EdgeSmooth, Identities) {
    const Instance in = random_instance(10, 9, 5);
    const LossConfig cfg;
    EXPECT_EQ(edge_smooth_conf(FloatMap(10, 9, 42.0), in.image, in.conf, cfg).value, 0.0);
    const double base = edge_smooth_conf(in.pred, in.image, in.conf, cfg).value;
    for (double c : {0.01, 3.0, 1e4}) {
        FloatMap scaled = in.pred;
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= c;
        EXPECT_NEAR(edge_smooth_conf(scaled, in.image, in.conf, cfg).value, base, 1e-9);
    }
    EXPECT_THROW(edge_smooth_conf(FloatMap(10, 9, -1.0), in.image, in.conf, cfg), InvalidDepthError);
}

TEST(EdgeSmooth, FiniteDifferences) {
    const LossConfig cfg;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Instance in = random_instance(12, 10, 300 + seed);
        const LossTerm t = edge_smooth_conf(in.pred, in.image, in.conf, cfg);
        const auto r = oracle::check_map_gradient(
            [&](const FloatMap& d) { return edge_smooth_conf(d, in.image, in.conf, cfg).value; }, in.pred, t.grad);
        EXPECT_LT(r.max_rel, 1e-5);
        EXPECT_GT(r.checked, 100u);
    }
}

TEST(EdgeSmooth, ZeroConfidenceAtPixelDropsItsTerms) {
    Instance in = random_instance(8, 8, 6);
    const LossConfig cfg;
    FloatMap conf(8, 8, 0.0);
    conf(4, 4) = 1.0;
    // Only the two pairs anchored at (4,4) contribute.
    const double v = edge_smooth_conf(in.pred, in.image, conf, cfg).value;
    const FloatMap gray = grayscale(in.image);
    double mu = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < in.pred.size(); ++i) {
        if (in.pred.valid(i)) {
            mu += in.pred[i];
            ++m;
        }
    }
    mu /= static_cast<double>(m);
    const double ex = std::fabs(in.pred(5, 4) - in.pred(4, 4)) / mu * std::exp(-std::fabs(gray(5, 4) - gray(4, 4)));
    const double ey = std::fabs(in.pred(4, 5) - in.pred(4, 4)) / mu * std::exp(-std::fabs(gray(4, 5) - gray(4, 4)));
    EXPECT_NEAR(v, (ex + ey) / static_cast<double>(m), 1e-15);
}

TEST(Total, AdditivityAndPerfectPrediction) {
    const Instance in = random_instance(16, 12, 7);
    const LossConfig cfg;
    const LossBreakdown b = total_loss(in.pred, in.gt, in.conf, in.image, cfg);
    EXPECT_NEAR(b.total, b.silog_conf + b.grad_conf + b.edge_conf, 1e-12);
    const LossTerm s = silog_conf(in.pred, in.gt, in.conf, cfg);
    const LossTerm g = grad_match_conf(in.pred, in.gt, in.conf, cfg);
    const LossTerm e = edge_smooth_conf(in.pred, in.image, in.conf, cfg);
    EXPECT_EQ(b.silog_conf, s.value);
    for (std::size_t i = 0; i < b.grad_wrt_pred.size(); ++i) {
        EXPECT_NEAR(b.grad_wrt_pred[i], s.grad[i] + g.grad[i] + e.grad[i], 1e-12);
    }
    const FloatMap flat(16, 12, 80.0);
    const LossBreakdown perfect = total_loss(flat, flat, in.conf, in.image, cfg);
    EXPECT_EQ(perfect.total, 0.0);
    EXPECT_EQ(perfect.silog_conf, 0.0);
    EXPECT_EQ(perfect.grad_conf, 0.0);
    EXPECT_EQ(perfect.edge_conf, 0.0);
}

TEST(Total, ConfigValidation) {
    LossConfig bad;
    bad.lambda_silog = 1.5;
    EXPECT_THROW(bad.validate(), ParameterError);
    bad = LossConfig{};
    bad.grad_scales = {0};
    EXPECT_THROW(bad.validate(), ParameterError);
    const nlohmann::json j = LossConfig{};
    EXPECT_EQ(j.get<LossConfig>().grad_scales, (std::vector<int>{1, 2, 4, 8}));
}

TEST(Bce, Examples) {
    EXPECT_LE(bce(FloatMap(3, 3, 1.0), FloatMap(3, 3, 1.0)).value, 1e-6);
    Rng rng(8);
    const FloatMap t = oracle::random_map(5, 5, 0.0, 1.0, rng);
    EXPECT_NEAR(bce(FloatMap(5, 5, 0.5), t).value, std::log(2.0), 1e-15);
    EXPECT_NEAR(bce(FloatMap(1, 1, 0.9), FloatMap(1, 1, 1.0)).value, -std::log(0.9), 1e-15);
    EXPECT_NEAR(bce(FloatMap(1, 1, 0.9), FloatMap(1, 1, 1.0)).value, 0.1053605, 5e-8);
    EXPECT_TRUE(std::isfinite(bce(FloatMap(1, 1, 0.0), FloatMap(1, 1, 1.0)).value));
}

TEST(Bce, FiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(400 + seed);
        const FloatMap p = oracle::random_map(7, 6, 0.02, 0.98, rng);
        const FloatMap t = oracle::random_map(7, 6, 0.0, 1.0, rng);
        const LossTerm term = bce(p, t);
        const auto r = oracle::check_map_gradient([&](const FloatMap& q) { return bce(q, t).value; }, p, term.grad);
        EXPECT_LT(r.max_rel, 1e-5);
        EXPECT_EQ(r.checked, p.size());
    }
}
