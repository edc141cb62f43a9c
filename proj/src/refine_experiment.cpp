#include "confdepth/refine_experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "confdepth/errors.hpp"
#include "confdepth/metrics.hpp"
#include "confdepth/parallel.hpp"
#include "confdepth/rng.hpp"

namespace confdepth {

void RefineConfig::validate() const {
    if (!(lr > 0.0)) throw ParameterError("refine: lr must be > 0");
    if (iters < 0) throw ParameterError("refine: iters must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("refine: momentum must lie in [0, 1)");
    if (!(z_min > 0.0) || !(z_max > z_min)) throw ParameterError("refine: need 0 < z_min < z_max");
    loss.validate();
}

std::string RefineConfig::label() const {
    return std::string("CH") + (use_ch ? "+" : "-") + "CAL" + (use_cal ? "+" : "-");
}

FloatMap refine_depth(const FloatMap& init, const FloatMap& supervision, const FloatMap& conf,
                      const RgbImage& image, const RefineConfig& cfg, std::vector<double>* loss_curve) {
    cfg.validate();
    if (!init.same_shape(supervision) || !init.same_shape(conf)) {
        throw ShapeError("refine_depth: init, supervision and confidence shapes differ");
    }
    const FloatMap weights = cfg.use_cal ? conf : FloatMap(conf.width(), conf.height(), 1.0);

    FloatMap depth = init;
    if (cfg.iters == 0) return depth;

    double total_weight = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights.valid(i) && init.valid(i) && supervision.valid(i)) total_weight += weights[i];
    }
    if (total_weight < 1e-12) {
        spdlog::warn("refine_depth: confidence is zero everywhere; returning the initial depth");
        if (loss_curve) loss_curve->assign(static_cast<std::size_t>(cfg.iters) + 1, 0.0);
        return depth;
    }

    std::vector<double> velocity(depth.size(), 0.0);
    if (loss_curve) loss_curve->clear();
    for (int it = 0; it <= cfg.iters; ++it) {
        const LossBreakdown b = total_loss(depth, supervision, weights, image, cfg.loss);
        if (!std::isfinite(b.total)) {
            throw InvalidDepthError("refine_depth: loss became non-finite at iteration " + std::to_string(it));
        }
        if (loss_curve) loss_curve->push_back(b.total);
        if (it == cfg.iters) break;
        for (std::size_t i = 0; i < depth.size(); ++i) {
            if (!depth.valid(i)) continue;
            velocity[i] = cfg.momentum * velocity[i] - cfg.lr * b.grad_wrt_pred[i];
            depth[i] = std::clamp(depth[i] + velocity[i], cfg.z_min, cfg.z_max);
        }
    }
    return depth;
}

FloatMap perturbed_init(const FloatMap& supervision, double amplitude, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x1417);
    const double fx = rng.uniform(0.5, 1.5);
    const double fy = rng.uniform(0.5, 1.5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    FloatMap out = supervision;
    const int w = out.width();
    const int h = out.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!out.valid(x, y)) continue;
            const double wave = std::sin(2.0 * std::numbers::pi * (fx * x / w + fy * y / h) + phase);
            out(x, y) *= 1.0 + amplitude * wave;
        }
    }
    return out;
}

CameraRig benchmark_rig(const BenchmarkConfig& cfg) {
    CameraRig rig{cfg.focal_px, cfg.baseline_mm, 0.5 * (cfg.width - 1), 0.5 * (cfg.height - 1)};
    rig.validate();
    return rig;
}

LoadedSample corrupted_sample(const BenchmarkConfig& cfg, const CameraRig& rig, std::size_t index) {
    rig.validate();
    const std::uint64_t seed = cfg.seed * 1000003ull + index;
    const SceneSpec spec = random_scene_spec(seed, cfg.width, cfg.height, rig);
    SyntheticSample s = gen_scene(spec, seed);
    s = inject_artifacts(std::move(s), random_artifacts(seed, cfg.width, cfg.height, cfg.coverage), seed);
    s = simulate_ensemble(std::move(s), cfg.k, cfg.noise, seed);

    LoadedSample out;
    char id[32];
    std::snprintf(id, sizeof(id), "s%03zu", index);
    out.id = id;
    out.rig = rig;
    out.keypoints = sample_keypoints(s, cfg.keypoints, seed);
    out.image = std::move(s.image);
    out.depth_gt = s.depth_gt;
    out.supervision = std::move(s.depth_gt);
    for (std::size_t i = 0; i < out.supervision.size(); ++i) {
        if (s.corruption[i] >= cfg.corrupt_threshold) out.supervision[i] *= cfg.bias;
    }
    out.corruption = std::move(s.corruption);
    out.ensemble = std::move(s.ensemble.members);
    return out;
}

std::vector<LoadedSample> make_corrupted_benchmark(const BenchmarkConfig& cfg) {
    if (cfg.count <= 0) throw ValidationError("benchmark: count must be positive");
    const CameraRig rig = benchmark_rig(cfg);
    std::vector<LoadedSample> out(static_cast<std::size_t>(cfg.count));
    parallel_for(out.size(), [&](std::size_t n) { out[n] = corrupted_sample(cfg, rig, n); });
    return out;
}

FloatMap clean_mask(const LoadedSample& sample, double corrupt_threshold) {
    FloatMap mask(sample.depth_gt.width(), sample.depth_gt.height(), 1.0);
    if (!sample.corruption) return mask;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (sample.corruption->valid(i) && (*sample.corruption)[i] >= corrupt_threshold) mask[i] = 0.0;
    }
    return mask;
}

FloatMap ensemble_confidence(const LoadedSample& sample, const SigmaPolicy& policy) {
    if (sample.ensemble.empty()) {
        throw ConfigError("sample '" + sample.id + "' has no ensemble maps; ensemble confidence labels are required");
    }
    const EnsembleStats stats = ensemble_mean_variance(EnsembleDisparities{sample.ensemble});
    return variance_to_confidence(stats.variance, effective_sigma(policy, sample.depth_gt.width()));
}

namespace {

FeatureMap sample_features(const LoadedSample& sample, const SigmaPolicy& policy) {
    if (sample.ensemble.empty()) {
        throw ConfigError("sample '" + sample.id + "' has no ensemble maps; head features need ensemble variance");
    }
    const EnsembleStats stats = ensemble_mean_variance(EnsembleDisparities{sample.ensemble});
    return engineered_features(sample.image, stats.variance, effective_sigma(policy, sample.depth_gt.width()));
}

}  // namespace

HeadParams train_head_on_samples(const std::vector<LoadedSample>& samples, int count, const SigmaPolicy& policy,
                                 const HeadTrainConfig& cfg, std::vector<double>* loss_curve) {
    const std::size_t n = std::min(samples.size(), static_cast<std::size_t>(std::max(count, 1)));
    std::vector<HeadSample> train(n);
    parallel_for(n, [&](std::size_t i) {
        train[i] = HeadSample{sample_features(samples[i], policy), ensemble_confidence(samples[i], policy)};
    });
    HeadTrainResult result = train_head(train, cfg);
    if (loss_curve) *loss_curve = result.loss_curve;
    return result.params;
}

FloatMap head_confidence(const LoadedSample& sample, const HeadParams& params, const SigmaPolicy& policy) {
    return head_forward(sample_features(sample, policy), params);
}

std::vector<HeadSample> separable_head_task(int count, int width, int height, std::uint64_t seed) {
    if (count <= 0) throw ValidationError("separable_head_task: count must be positive");
    CameraRig rig{60.0, 5.0, 0.5 * (width - 1), 0.5 * (height - 1)};
    std::vector<HeadSample> out(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const std::uint64_t s = seed * 1000003ull + static_cast<std::uint64_t>(n);
        SyntheticSample sample = gen_scene(random_scene_spec(s, width, height, rig), s);
        sample = inject_artifacts(std::move(sample), random_artifacts(s, width, height, 0.3), s);
        FeatureMap features(width, height, 2);
        FloatMap target(width, height, 0.0);
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double strength = sample.corruption[i];
            features.data[i] = strength;
            features.data[target.size() + i] = 1.0 - strength;
            target[i] = strength < 0.5 ? 1.0 : 0.0;
        }
        out[static_cast<std::size_t>(n)] = HeadSample{std::move(features), std::move(target)};
    }
    return out;
}

namespace {

struct SampleOutcome {
    DepthMetrics clean;
    DepthMetrics all;
    double kp_err_sum = 0.0;
    std::size_t kp_within = 0;
    std::size_t kp_n = 0;
    std::vector<double> loss_curve;
};

}  // namespace

ExperimentReport run_ablation(const std::vector<LoadedSample>& samples, const AblationConfig& cfg) {
    if (samples.empty()) throw ConfigError("ablation: no samples");
    if (cfg.grid.empty()) throw ConfigError("ablation: empty configuration grid");
    if (cfg.sigma_grid.empty()) throw ConfigError("ablation: empty sigma grid");
    for (const auto& c : cfg.grid) c.validate();

    ExperimentReport report;
    report.substitution_note =
        "Depth-field optimisation replaces network training; the CH-only cell (CH+, CAL-) refines with uniform "
        "confidence and uses head confidence >= 0.5 only to restrict evaluation.";
    for (std::size_t n = 0; n < samples.size(); ++n) report.seeds.push_back(cfg.seed * 7919ull + n);

    std::vector<FloatMap> inits(samples.size());
    std::vector<FloatMap> clean(samples.size());
    for (std::size_t n = 0; n < samples.size(); ++n) {
        inits[n] = perturbed_init(samples[n].supervision, cfg.init_perturbation, report.seeds[n]);
        clean[n] = clean_mask(samples[n], cfg.corrupt_threshold);
    }

    const bool any_ch = std::any_of(cfg.grid.begin(), cfg.grid.end(), [](const RefineConfig& c) { return c.use_ch; });
    const bool any_ensemble_cal =
        std::any_of(cfg.grid.begin(), cfg.grid.end(), [](const RefineConfig& c) { return c.use_cal && !c.use_ch; });

    for (double sigma : cfg.sigma_grid) {
        SigmaPolicy policy = cfg.sigma_policy;
        policy.sigma_base = sigma;

        std::vector<FloatMap> ens_conf(samples.size());
        if (any_ensemble_cal || any_ch) {
            parallel_for(samples.size(), [&](std::size_t n) { ens_conf[n] = ensemble_confidence(samples[n], policy); });
        }
        std::vector<FloatMap> head_conf(samples.size());
        if (any_ch) {
            const HeadParams head = train_head_on_samples(samples, cfg.head_train_samples, policy, cfg.head);
            parallel_for(samples.size(), [&](std::size_t n) { head_conf[n] = head_confidence(samples[n], head, policy); });
        }

        for (const RefineConfig& rc : cfg.grid) {
            const bool head_masks_eval = rc.use_ch && !rc.use_cal;
            std::vector<SampleOutcome> outcomes(samples.size());
            parallel_for(samples.size(), [&](std::size_t n) {
                const LoadedSample& s = samples[n];
                const FloatMap uniform(s.depth_gt.width(), s.depth_gt.height(), 1.0);
                const FloatMap& conf = rc.use_cal ? (rc.use_ch ? head_conf[n] : ens_conf[n]) : uniform;
                SampleOutcome& out = outcomes[n];
                const FloatMap depth = refine_depth(inits[n], s.supervision, conf, s.image, rc, &out.loss_curve);

                FloatMap clean_eval = clean[n];
                FloatMap all_eval(depth.width(), depth.height(), 1.0);
                if (head_masks_eval) {
                    for (std::size_t i = 0; i < depth.size(); ++i) {
                        if (head_conf[n][i] < 0.5) {
                            clean_eval[i] = 0.0;
                            all_eval[i] = 0.0;
                        }
                    }
                }
                out.clean = evaluate_depth(depth, s.depth_gt, &clean_eval);
                out.all = evaluate_depth(depth, s.depth_gt, &all_eval);
                for (const auto& kp : s.keypoints) {
                    const int x = static_cast<int>(std::lround(kp.u_left));
                    const int y = static_cast<int>(std::lround(kp.v_left));
                    if (head_masks_eval && x >= 0 && y >= 0 && x < depth.width() && y < depth.height() &&
                        all_eval(x, y) == 0.0) {
                        continue;
                    }
                    const KeypointMetrics km = keypoint_metrics(depth, std::span(&kp, 1), s.rig);
                    if (km.n == 0) continue;
                    out.kp_err_sum += km.mae_mm;
                    out.kp_within += km.acc_2mm > 0.5 ? 1 : 0;
                    ++out.kp_n;
                }
            });

            AblationRow row;
            row.use_ch = rc.use_ch;
            row.use_cal = rc.use_cal;
            row.sigma = sigma;
            row.eval_mask = head_masks_eval ? "clean&head" : "clean";
            double kp_err = 0.0;
            std::size_t kp_within = 0;
            const double inv_n = 1.0 / static_cast<double>(samples.size());
            row.mean_loss_curve.assign(outcomes.front().loss_curve.size(), 0.0);
            for (const auto& o : outcomes) {
                row.are_clean += o.clean.are * inv_n;
                row.delta1_clean += o.clean.delta1 * inv_n;
                row.are_all += o.all.are * inv_n;
                row.delta1_all += o.all.delta1 * inv_n;
                kp_err += o.kp_err_sum;
                kp_within += o.kp_within;
                row.keypoints += o.kp_n;
                for (std::size_t i = 0; i < row.mean_loss_curve.size() && i < o.loss_curve.size(); ++i) {
                    row.mean_loss_curve[i] += o.loss_curve[i] * inv_n;
                }
            }
            if (row.keypoints > 0) {
                row.mae_mm = kp_err / static_cast<double>(row.keypoints);
                row.acc_2mm = static_cast<double>(kp_within) / static_cast<double>(row.keypoints);
            }
            row.final_loss = row.mean_loss_curve.empty() ? 0.0 : row.mean_loss_curve.back();
            spdlog::info("ablation {} sigma={} ARE_clean={:.5f} delta1_all={:.4f} MAE={:.3f}mm", rc.label(), sigma,
                         row.are_clean, row.delta1_all, row.mae_mm);
            report.rows.push_back(std::move(row));
        }
    }

    nlohmann::json grid = nlohmann::json::array();
    for (const auto& c : cfg.grid) grid.push_back(c);
    report.config_echo = {{"grid", grid},
                          {"sigma_grid", cfg.sigma_grid},
                          {"ref_width", cfg.sigma_policy.ref_width},
                          {"head", {{"lr", cfg.head.lr}, {"epochs", cfg.head.epochs}, {"seed", cfg.head.seed}}},
                          {"head_train_samples", cfg.head_train_samples},
                          {"init_perturbation", cfg.init_perturbation},
                          {"corrupt_threshold", cfg.corrupt_threshold},
                          {"seed", cfg.seed}};
    return report;
}

ExperimentReport run_ablation(const DatasetManifest& manifest, const AblationConfig& cfg) {
    if (manifest.samples.empty()) throw ConfigError("ablation: manifest has no samples");
    std::vector<LoadedSample> samples(manifest.samples.size());
    for (std::size_t n = 0; n < samples.size(); ++n) samples[n] = load_sample(manifest, manifest.samples[n]);
    return run_ablation(samples, cfg);
}

std::string ablation_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out << "CH,CAL,sigma,eval_mask,ARE_clean,delta1_clean,ARE_all,delta1_all,MAE_mm,Acc_2mm,keypoints,final_loss\n";
    out << std::setprecision(9);
    for (const auto& r : report.rows) {
        out << (r.use_ch ? 1 : 0) << ',' << (r.use_cal ? 1 : 0) << ',' << r.sigma << ',' << r.eval_mask << ','
            << r.are_clean << ',' << r.delta1_clean << ',' << r.are_all << ',' << r.delta1_all << ',' << r.mae_mm
            << ',' << r.acc_2mm << ',' << r.keypoints << ',' << r.final_loss << '\n';
    }
    return out.str();
}

nlohmann::json ablation_json(const ExperimentReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"CH", r.use_ch},
                        {"CAL", r.use_cal},
                        {"sigma", r.sigma},
                        {"metrics",
                         {{"clean", {{"mask", r.eval_mask}, {"are", r.are_clean}, {"delta1", r.delta1_clean}}},
                          {"all",
                           {{"mask", r.eval_mask == "clean" ? "all" : "all&head"},
                            {"are", r.are_all},
                            {"delta1", r.delta1_all}}},
                          {"keypoints",
                           {{"mask", r.eval_mask == "clean" ? "keypoints" : "keypoints&head"},
                            {"mae_mm", r.mae_mm},
                            {"acc_2mm", r.acc_2mm},
                            {"n", r.keypoints}}}}},
                        {"final_loss", r.final_loss},
                        {"loss_curve", r.mean_loss_curve}});
    }
    return {{"rows", rows},
            {"config", report.config_echo},
            {"seeds", report.seeds},
            {"note", report.substitution_note}};
}

void to_json(nlohmann::json& j, const RefineConfig& cfg) {
    j = {{"lr", cfg.lr},         {"iters", cfg.iters},   {"momentum", cfg.momentum}, {"use_cal", cfg.use_cal},
         {"use_ch", cfg.use_ch}, {"z_min", cfg.z_min},   {"z_max", cfg.z_max},       {"loss", cfg.loss}};
}

void from_json(const nlohmann::json& j, RefineConfig& cfg) {
    const RefineConfig d;
    cfg.lr = j.value("lr", d.lr);
    cfg.iters = j.value("iters", d.iters);
    cfg.momentum = j.value("momentum", d.momentum);
    cfg.use_cal = j.value("use_cal", d.use_cal);
    cfg.use_ch = j.value("use_ch", d.use_ch);
    cfg.z_min = j.value("z_min", d.z_min);
    cfg.z_max = j.value("z_max", d.z_max);
    cfg.loss = j.contains("loss") ? j.at("loss").get<LossConfig>() : d.loss;
    cfg.validate();
}

void to_json(nlohmann::json& j, const BenchmarkConfig& cfg) {
    j = {{"count", cfg.count},
         {"width", cfg.width},
         {"height", cfg.height},
         {"focal_px", cfg.focal_px},
         {"baseline_mm", cfg.baseline_mm},
         {"k", cfg.k},
         {"base_std_px", cfg.noise.base_std_px},
         {"artifact_std_px", cfg.noise.artifact_std_px},
         {"coverage", cfg.coverage},
         {"bias", cfg.bias},
         {"corrupt_threshold", cfg.corrupt_threshold},
         {"keypoints", cfg.keypoints},
         {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, BenchmarkConfig& cfg) {
    const BenchmarkConfig d;
    cfg.count = j.value("count", d.count);
    cfg.width = j.value("width", d.width);
    cfg.height = j.value("height", d.height);
    cfg.focal_px = j.value("focal_px", d.focal_px);
    cfg.baseline_mm = j.value("baseline_mm", d.baseline_mm);
    cfg.k = j.value("k", d.k);
    cfg.noise.base_std_px = j.value("base_std_px", d.noise.base_std_px);
    cfg.noise.artifact_std_px = j.value("artifact_std_px", d.noise.artifact_std_px);
    cfg.coverage = j.value("coverage", d.coverage);
    cfg.bias = j.value("bias", d.bias);
    cfg.corrupt_threshold = j.value("corrupt_threshold", d.corrupt_threshold);
    cfg.keypoints = j.value("keypoints", d.keypoints);
    cfg.seed = j.value("seed", d.seed);
}

}  // namespace confdepth
