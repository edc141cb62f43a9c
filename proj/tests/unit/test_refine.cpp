#include <gtest/gtest.h>

#include "confdepth/errors.hpp"
#include "confdepth/refine_experiment.hpp"

using namespace confdepth;

namespace {

BenchmarkConfig small_benchmark(int count = 2) {
    BenchmarkConfig cfg;
    cfg.count = count;
    cfg.width = 32;
    cfg.height = 24;
    cfg.keypoints = 8;
    return cfg;
}

RefineConfig quick(bool cal, bool ch = false) {
    RefineConfig rc;
    rc.iters = 30;
    rc.use_cal = cal;
    rc.use_ch = ch;
    return rc;
}

}  // namespace

TEST(Refine, ZeroIterationsReturnsInit) {
    const auto samples = make_corrupted_benchmark(small_benchmark(1));
    const LoadedSample& s = samples[0];
    const FloatMap init = perturbed_init(s.supervision, 0.03, 1);
    RefineConfig rc;
    rc.iters = 0;
    EXPECT_EQ(refine_depth(init, s.supervision, ensemble_confidence(s, {}), s.image, rc), init);
}

TEST(Refine, ZeroConfidenceReturnsInit) {
    const auto samples = make_corrupted_benchmark(small_benchmark(1));
    const LoadedSample& s = samples[0];
    const FloatMap init = perturbed_init(s.supervision, 0.03, 1);
    std::vector<double> curve;
    const FloatMap zero(s.supervision.width(), s.supervision.height(), 0.0);
    EXPECT_EQ(refine_depth(init, s.supervision, zero, s.image, quick(true), &curve), init);
    ASSERT_EQ(curve.size(), 31u);
    for (double v : curve) EXPECT_EQ(v, 0.0);
}

TEST(Refine, AllOnesCalEqualsUniform) {
    const auto samples = make_corrupted_benchmark(small_benchmark(1));
    const LoadedSample& s = samples[0];
    const FloatMap init = perturbed_init(s.supervision, 0.03, 2);
    const FloatMap ones(s.supervision.width(), s.supervision.height(), 1.0);
    std::vector<double> ca, cb;
    const FloatMap a = refine_depth(init, s.supervision, ones, s.image, quick(true), &ca);
    const FloatMap b = refine_depth(init, s.supervision, ensemble_confidence(s, {}), s.image, quick(false), &cb);
    EXPECT_EQ(a, b);
    EXPECT_EQ(ca, cb);
}

TEST(Refine, DeterministicAndClamped) {
    const auto samples = make_corrupted_benchmark(small_benchmark(1));
    const LoadedSample& s = samples[0];
    const FloatMap init = perturbed_init(s.supervision, 0.03, 3);
    const FloatMap conf = ensemble_confidence(s, {});
    RefineConfig rc = quick(true);
    rc.z_min = 60.0;
    rc.z_max = 150.0;
    const FloatMap a = refine_depth(init, s.supervision, conf, s.image, rc);
    EXPECT_EQ(a, refine_depth(init, s.supervision, conf, s.image, rc));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_GE(a[i], 60.0);
        EXPECT_LE(a[i], 150.0);
    }
}

TEST(Refine, CleanSupervisionLowersLoss) {
    // Fixed-step descent on the L1 terms is not monotone step by step; the
    // refined depth must still end below where it started.
    const auto samples = make_corrupted_benchmark(small_benchmark(2));
    for (const auto& s : samples) {
        const FloatMap init = perturbed_init(s.depth_gt, 0.03, 4);
        const FloatMap ones(s.depth_gt.width(), s.depth_gt.height(), 1.0);
        std::vector<double> curve;
        RefineConfig rc;
        rc.iters = 100;
        rc.use_cal = false;
        refine_depth(init, s.depth_gt, ones, s.image, rc, &curve);
        ASSERT_EQ(curve.size(), 101u);
        EXPECT_LT(curve.back(), curve.front());
    }
}

TEST(Refine, ConfigValidation) {
    RefineConfig rc;
    rc.lr = 0.0;
    EXPECT_THROW(rc.validate(), ParameterError);
    rc = RefineConfig{};
    rc.momentum = 1.0;
    EXPECT_THROW(rc.validate(), ParameterError);
    rc = RefineConfig{};
    rc.iters = -1;
    EXPECT_THROW(rc.validate(), ParameterError);
    EXPECT_EQ(quick(true, true).label(), "CH+CAL+");
    EXPECT_EQ(quick(false).label(), "CH-CAL-");
    const nlohmann::json j = quick(true);
    const RefineConfig back = j.get<RefineConfig>();
    EXPECT_EQ(back.iters, 30);
    EXPECT_TRUE(back.use_cal);
}

TEST(Benchmark, SupervisionBiasAndMask) {
    const BenchmarkConfig cfg = small_benchmark(2);
    const auto samples = make_corrupted_benchmark(cfg);
    ASSERT_EQ(samples.size(), 2u);
    EXPECT_EQ(samples[0].id, "s000");
    for (const auto& s : samples) {
        const FloatMap clean = clean_mask(s, cfg.corrupt_threshold);
        std::size_t biased = 0;
        for (std::size_t i = 0; i < s.depth_gt.size(); ++i) {
            const bool corrupt = (*s.corruption)[i] >= cfg.corrupt_threshold;
            EXPECT_EQ(s.supervision[i], corrupt ? s.depth_gt[i] * 1.5 : s.depth_gt[i]);
            EXPECT_EQ(clean[i], corrupt ? 0.0 : 1.0);
            biased += corrupt ? 1 : 0;
        }
        EXPECT_GE(static_cast<double>(biased) / static_cast<double>(s.depth_gt.size()), cfg.coverage);
        EXPECT_EQ(s.ensemble.size(), static_cast<std::size_t>(cfg.k));
        EXPECT_LE(s.keypoints.size(), 8u);
        EXPECT_GE(s.keypoints.size(), 4u);
    }
    const auto again = make_corrupted_benchmark(cfg);
    EXPECT_EQ(again[1].supervision, samples[1].supervision);
    EXPECT_EQ(again[1].ensemble[3], samples[1].ensemble[3]);
}

TEST(Ablation, OneCellAndIdenticalRows) {
    const auto samples = make_corrupted_benchmark(small_benchmark(1));
    AblationConfig cfg;
    cfg.grid = {quick(true)};
    const ExperimentReport one = run_ablation(samples, cfg);
    ASSERT_EQ(one.rows.size(), 1u);
    EXPECT_EQ(one.rows[0].eval_mask, "clean");
    EXPECT_EQ(one.rows[0].mean_loss_curve.size(), 31u);
    EXPECT_FALSE(one.substitution_note.empty());

    cfg.grid = {quick(true), quick(true)};
    const ExperimentReport two = run_ablation(samples, cfg);
    ASSERT_EQ(two.rows.size(), 2u);
    EXPECT_EQ(two.rows[0].are_clean, two.rows[1].are_clean);
    EXPECT_EQ(two.rows[0].delta1_all, two.rows[1].delta1_all);
    EXPECT_EQ(two.rows[0].mean_loss_curve, two.rows[1].mean_loss_curve);
    EXPECT_EQ(ablation_csv(run_ablation(samples, cfg)), ablation_csv(two));
}

TEST(Ablation, GridTimesSigmaAndMaskTags) {
    const auto samples = make_corrupted_benchmark(small_benchmark(2));
    AblationConfig cfg;
    cfg.grid = {quick(false), quick(true), quick(false, true), quick(true, true)};
    cfg.sigma_grid = {0.5, 0.7};
    cfg.head.epochs = 20;
    cfg.head_train_samples = 1;
    const ExperimentReport r = run_ablation(samples, cfg);
    ASSERT_EQ(r.rows.size(), 8u);
    EXPECT_EQ(r.rows[2].eval_mask, "clean&head");
    EXPECT_EQ(r.rows[3].eval_mask, "clean");
    EXPECT_EQ(r.rows[4].sigma, 0.7);
    const std::string csv = ablation_csv(r);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
    const nlohmann::json j = ablation_json(r);
    EXPECT_EQ(j.at("rows").size(), 8u);
}

TEST(Ablation, MissingEnsembleIsConfigError) {
    auto samples = make_corrupted_benchmark(small_benchmark(1));
    samples[0].ensemble.clear();
    AblationConfig cfg;
    cfg.grid = {quick(true)};
    EXPECT_THROW(run_ablation(samples, cfg), ConfigError);
    cfg.grid = {quick(false)};
    EXPECT_NO_THROW(run_ablation(samples, cfg));
}

TEST(HeadTask, SeparableTaskShape) {
    const auto task = separable_head_task(3, 20, 10, 5);
    ASSERT_EQ(task.size(), 3u);
    for (const auto& s : task) {
        ASSERT_EQ(s.features.channels, 2);
        for (int y = 0; y < 10; ++y) {
            for (int x = 0; x < 20; ++x) {
                const double c = s.features.at(0, x, y);
                EXPECT_EQ(s.features.at(1, x, y), 1.0 - c);
                EXPECT_EQ(s.target(x, y), c < 0.5 ? 1.0 : 0.0);
            }
        }
    }
}
