// Command line driver: dataset generation, confidence maps, refinement,
// ablation, evaluation, reports and head training.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "confdepth/confidence_head.hpp"
#include "confdepth/ensemble_confidence.hpp"
#include "confdepth/errors.hpp"
#include "confdepth/map_io.hpp"
#include "confdepth/metrics.hpp"
#include "confdepth/parallel.hpp"
#include "confdepth/refine_experiment.hpp"
#include "confdepth/synthetic_data.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace confdepth;
using cli::RunConfig;

namespace {

json sigma_defaults() { return {{"sigma_base", 0.7}, {"ref_width", 518.0}}; }

SigmaPolicy sigma_policy(const RunConfig& cfg) {
    SigmaPolicy p;
    p.sigma_base = cfg.values.at("sigma_base").get<double>();
    p.ref_width = cfg.values.at("ref_width").get<double>();
    return p;
}

HeadTrainConfig head_train_config(const json& j) {
    HeadTrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.bce_epsilon = j.value("bce_epsilon", c.bce_epsilon);
    if (!(c.lr > 0.0) || c.epochs < 0) throw ParameterError("head: need lr > 0 and epochs >= 0");
    return c;
}

json head_train_json(const HeadTrainConfig& c) {
    return {{"lr", c.lr}, {"epochs", c.epochs}, {"seed", c.seed}, {"bce_epsilon", c.bce_epsilon}};
}

std::vector<LoadedSample> load_all(const fs::path& manifest_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    if (manifest.samples.empty()) throw ConfigError("manifest '" + manifest_path.string() + "' has no samples");
    std::vector<LoadedSample> samples(manifest.samples.size());
    parallel_for(samples.size(), [&](std::size_t n) { samples[n] = load_sample(manifest, manifest.samples[n]); });
    return samples;
}

// Dataset from config.manifest when given, otherwise the generated benchmark.
std::vector<LoadedSample> load_or_generate(const RunConfig& cfg) {
    if (cfg.values.contains("manifest") && !cfg.values.at("manifest").is_null()) {
        return load_all(cfg.values.at("manifest").get<std::string>());
    }
    return make_corrupted_benchmark(cfg.values.at("benchmark").get<BenchmarkConfig>());
}

std::string fmt_double(double v) {
    std::ostringstream s;
    s.precision(9);
    s << v;
    return s.str();
}

// ---- gen-data ----------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
    const json& rig_json = cli::require(cfg, "rig");
    CameraRig rig;
    try {
        rig = rig_json.get<CameraRig>();
    } catch (const ValidationError& e) {
        throw ValidationError("gen-data: config.rig: " + std::string(e.what()));
    }
    const json& v = cfg.values;
    BenchmarkConfig bench;
    bench.seed = v.at("seed").get<std::uint64_t>();
    bench.count = v.at("count").get<int>();
    bench.width = v.at("width").get<int>();
    bench.height = v.at("height").get<int>();
    bench.k = v.at("k").get<int>();
    bench.noise.base_std_px = v.at("noise").at("base_std_px").get<double>();
    bench.noise.artifact_std_px = v.at("noise").at("artifact_std_px").get<double>();
    bench.coverage = v.at("coverage").get<double>();
    bench.bias = v.at("bias").get<double>();
    bench.corrupt_threshold = v.at("corrupt_threshold").get<double>();
    bench.keypoints = v.at("keypoints").get<int>();
    if (!(bench.bias > 0.0)) throw ParameterError("gen-data: bias must be positive");

    std::vector<LoadedSample> samples;
    if (v.contains("scenes") && !v.at("scenes").is_null()) {
        const json& scenes = v.at("scenes");
        if (!scenes.is_array() || scenes.empty()) throw ValidationError("gen-data: config.scenes must be a non-empty array");
        samples.resize(scenes.size());
        for (std::size_t n = 0; n < scenes.size(); ++n) {
            const json& sj = scenes[n];
            const std::string where = "gen-data: config.scenes[" + std::to_string(n) + "]";
            SceneSpec spec;
            spec.rig = rig;
            spec.width = sj.value("width", bench.width);
            spec.height = sj.value("height", bench.height);
            spec.texture_seed = sj.value("texture_seed", static_cast<std::uint64_t>(n));
            spec.z_min = sj.value("z_min", spec.z_min);
            spec.z_max = sj.value("z_max", spec.z_max);
            if (!sj.contains("primitives")) throw ValidationError(where + ".primitives is required");
            spec.primitives = sj.at("primitives").get<std::vector<Primitive>>();
            const auto artifacts = sj.value("artifacts", json::array()).get<std::vector<ArtifactSpec>>();

            const std::uint64_t seed = bench.seed * 1000003ull + n;
            SyntheticSample s = gen_scene(spec, seed);
            s = inject_artifacts(std::move(s), artifacts, seed);
            s = simulate_ensemble(std::move(s), bench.k, bench.noise, seed);

            LoadedSample& out = samples[n];
            char id[32];
            std::snprintf(id, sizeof(id), "s%03zu", n);
            out.id = id;
            out.rig = rig;
            out.keypoints = sample_keypoints(s, bench.keypoints, seed);
            out.image = std::move(s.image);
            out.depth_gt = s.depth_gt;
            out.supervision = std::move(s.depth_gt);
            for (std::size_t i = 0; i < out.supervision.size(); ++i) {
                if (s.corruption[i] >= bench.corrupt_threshold) out.supervision[i] *= bench.bias;
            }
            out.corruption = std::move(s.corruption);
            out.ensemble = std::move(s.ensemble.members);
        }
    } else {
        if (bench.count <= 0) throw ValidationError("gen-data: config.count must be positive");
        samples.resize(static_cast<std::size_t>(bench.count));
        parallel_for(samples.size(), [&](std::size_t n) { samples[n] = corrupted_sample(bench, rig, n); });
    }

    cli::prepare_output(cfg);
    write_dataset(samples, cfg.out);
    cli::write_echo(cfg);
    std::cout << samples.size() << " samples written to " << cfg.out.string() << "\n";
    return 0;
}

// ---- confidence --------------------------------------------------------

int cmd_confidence(const RunConfig& cfg) {
    const fs::path manifest_path = cli::require(cfg, "manifest").get<std::string>();
    const SigmaPolicy policy = sigma_policy(cfg);
    const DatasetManifest manifest = read_manifest(manifest_path);
    cli::prepare_output(cfg);

    json done = json::array();
    json skipped = json::array();
    for (const auto& ms : manifest.samples) {
        if (ms.ensemble.empty()) {
            spdlog::warn("sample {}: no ensemble maps, skipped", ms.id);
            skipped.push_back({{"id", ms.id}, {"reason", "no ensemble maps"}});
            continue;
        }
        const LoadedSample s = load_sample(manifest, ms);
        const EnsembleStats stats = ensemble_mean_variance(EnsembleDisparities{s.ensemble});
        const double sigma_eff = effective_sigma(policy, s.depth_gt.width());
        spdlog::info("sample {}: K={} sigma_eff={}", s.id, s.ensemble.size(), sigma_eff);
        const FloatMap conf = variance_to_confidence(stats.variance, sigma_eff);
        write_pfm(stats.variance, cfg.out / (s.id + "_variance.pfm"));
        write_pfm(conf, cfg.out / (s.id + "_confidence.pfm"));
        double mean = 0.0;
        for (std::size_t i = 0; i < conf.size(); ++i) mean += conf[i];
        mean /= static_cast<double>(conf.size());
        done.push_back({{"id", s.id}, {"k", s.ensemble.size()}, {"sigma_eff", sigma_eff}, {"mean_confidence", mean}});
    }
    cli::write_text(cfg.out / "confidence.json",
                    json{{"samples", done}, {"skipped", skipped}}.dump(2) + "\n");
    cli::write_echo(cfg);
    std::cout << done.size() << " confidence maps, " << skipped.size() << " skipped\n";
    return 0;
}

// ---- refine ------------------------------------------------------------

int cmd_refine(const RunConfig& cfg) {
    const fs::path manifest_path = cli::require(cfg, "manifest").get<std::string>();
    const RefineConfig rc = cfg.values.at("refine").get<RefineConfig>();
    const SigmaPolicy policy = sigma_policy(cfg);
    const double perturbation = cfg.values.at("init_perturbation").get<double>();
    const double threshold = cfg.values.at("corrupt_threshold").get<double>();
    const std::uint64_t seed = cfg.values.at("seed").get<std::uint64_t>();

    HeadParams head;
    if (rc.use_ch) {
        if (!cfg.values.contains("head") || cfg.values.at("head").is_null()) {
            throw ConfigError("refine: refine.use_ch needs config.head (path to a trained head)");
        }
        head = load_head(cfg.values.at("head").get<std::string>());
    }
    const std::vector<LoadedSample> samples = load_all(manifest_path);
    cli::prepare_output(cfg);

    struct Outcome {
        DepthMetrics all, clean;
        KeypointMetrics kp;
        std::vector<double> curve;
    };
    std::vector<Outcome> outcomes(samples.size());
    parallel_for(samples.size(), [&](std::size_t n) {
        const LoadedSample& s = samples[n];
        FloatMap conf(s.depth_gt.width(), s.depth_gt.height(), 1.0);
        if (rc.use_cal) conf = rc.use_ch ? head_confidence(s, head, policy) : ensemble_confidence(s, policy);
        const FloatMap init = perturbed_init(s.supervision, perturbation, seed * 7919ull + n);
        const FloatMap depth = refine_depth(init, s.supervision, conf, s.image, rc, &outcomes[n].curve);
        write_pfm(depth, cfg.out / (s.id + "_depth.pfm"));
        const FloatMap clean = clean_mask(s, threshold);
        outcomes[n].all = evaluate_depth(depth, s.depth_gt);
        outcomes[n].clean = evaluate_depth(depth, s.depth_gt, &clean);
        outcomes[n].kp = keypoint_metrics(depth, s.keypoints, s.rig);
    });

    json rows = json::array();
    std::string csv = "id,ARE_all,delta1_all,ARE_clean,delta1_clean,MAE_mm,Acc_2mm,keypoints,final_loss\n";
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const Outcome& o = outcomes[n];
        rows.push_back({{"id", samples[n].id},
                        {"all", o.all},
                        {"clean", o.clean},
                        {"keypoints", o.kp},
                        {"final_loss", o.curve.back()},
                        {"loss_curve", o.curve}});
        csv += samples[n].id + "," + fmt_double(o.all.are) + "," + fmt_double(o.all.delta1) + "," +
               fmt_double(o.clean.are) + "," + fmt_double(o.clean.delta1) + "," + fmt_double(o.kp.mae_mm) + "," +
               fmt_double(o.kp.acc_2mm) + "," + std::to_string(o.kp.n) + "," + fmt_double(o.curve.back()) + "\n";
    }
    cli::write_text(cfg.out / "refine.json",
                    json{{"config", rc.label()}, {"samples", rows}}.dump(2) + "\n");
    cli::write_text(cfg.out / "refine.csv", csv);
    cli::write_echo(cfg);
    std::cout << samples.size() << " samples refined (" << rc.label() << ")\n";
    return 0;
}

// ---- ablate ------------------------------------------------------------

int cmd_ablate(const RunConfig& cfg) {
    const json& v = cfg.values;
    const RefineConfig base = v.at("refine").get<RefineConfig>();
    AblationConfig ac;
    for (const auto& cell : v.at("grid")) {
        RefineConfig rc = base;
        rc.use_ch = cell.value("use_ch", false);
        rc.use_cal = cell.value("use_cal", true);
        ac.grid.push_back(rc);
    }
    ac.sigma_grid = v.at("sigma_grid").get<std::vector<double>>();
    ac.sigma_policy.ref_width = v.at("ref_width").get<double>();
    ac.head = head_train_config(v.at("head"));
    ac.head_train_samples = v.at("head_train_samples").get<int>();
    ac.init_perturbation = v.at("init_perturbation").get<double>();
    ac.corrupt_threshold = v.at("corrupt_threshold").get<double>();
    ac.seed = v.at("seed").get<std::uint64_t>();

    const std::vector<LoadedSample> samples = load_or_generate(cfg);
    cli::prepare_output(cfg);
    const ExperimentReport report = run_ablation(samples, ac);
    cli::write_text(cfg.out / "ablation.json", ablation_json(report).dump(2) + "\n");
    cli::write_text(cfg.out / "ablation.csv", ablation_csv(report));
    cli::write_echo(cfg);
    std::cout << report.rows.size() << " ablation cells over " << samples.size() << " samples\n";
    return 0;
}

// ---- eval --------------------------------------------------------------

fs::path prediction_path(const RunConfig& cfg, const std::string& id) {
    std::string name = cfg.values.at("pattern").get<std::string>();
    const auto at = name.find("{id}");
    if (at == std::string::npos) throw ConfigError(cfg.command + ": config.pattern must contain '{id}'");
    name.replace(at, 4, id);
    return fs::path(cli::require(cfg, "predictions").get<std::string>()) / name;
}

int cmd_eval(const RunConfig& cfg) {
    const std::vector<LoadedSample> samples = load_all(cli::require(cfg, "manifest").get<std::string>());
    const std::string mask = cfg.values.at("mask").get<std::string>();
    if (mask != "all" && mask != "clean") throw ConfigError("eval: config.mask must be 'all' or 'clean'");
    const double threshold = cfg.values.at("corrupt_threshold").get<double>();
    std::vector<FloatMap> preds(samples.size());
    for (std::size_t n = 0; n < samples.size(); ++n) preds[n] = read_pfm(prediction_path(cfg, samples[n].id));
    cli::prepare_output(cfg);

    json rows = json::array();
    std::string csv = "id,mask,ARE,delta1,n_valid,MAE_mm,Acc_2mm,keypoints\n";
    double are = 0.0, delta1 = 0.0, kp_err = 0.0, kp_ok = 0.0;
    std::size_t kp_n = 0;
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const LoadedSample& s = samples[n];
        if (!preds[n].same_shape(s.depth_gt)) throw ShapeError("eval: prediction for '" + s.id + "' has the wrong size");
        const FloatMap eval_mask = mask == "clean" ? clean_mask(s, threshold) : FloatMap(s.depth_gt.width(), s.depth_gt.height(), 1.0);
        const DepthMetrics m = evaluate_depth(preds[n], s.depth_gt, &eval_mask);
        const KeypointMetrics k = keypoint_metrics(preds[n], s.keypoints, s.rig);
        are += m.are;
        delta1 += m.delta1;
        kp_err += k.mae_mm * static_cast<double>(k.n);
        kp_ok += k.acc_2mm * static_cast<double>(k.n);
        kp_n += k.n;
        rows.push_back({{"id", s.id}, {"mask", mask}, {"depth", m}, {"keypoints", k}});
        csv += s.id + "," + mask + "," + fmt_double(m.are) + "," + fmt_double(m.delta1) + "," +
               std::to_string(m.n_valid) + "," + fmt_double(k.mae_mm) + "," + fmt_double(k.acc_2mm) + "," +
               std::to_string(k.n) + "\n";
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    const double mae = kp_n ? kp_err / static_cast<double>(kp_n) : 0.0;
    const double acc = kp_n ? kp_ok / static_cast<double>(kp_n) : 0.0;
    csv += "mean," + mask + "," + fmt_double(are * inv) + "," + fmt_double(delta1 * inv) + ",," + fmt_double(mae) +
           "," + fmt_double(acc) + "," + std::to_string(kp_n) + "\n";
    const json mean{{"mask", mask}, {"are", are * inv}, {"delta1", delta1 * inv}, {"mae_mm", mae}, {"acc_2mm", acc}, {"keypoints", kp_n}};
    cli::write_text(cfg.out / "eval.json", json{{"samples", rows}, {"mean", mean}}.dump(2) + "\n");
    cli::write_text(cfg.out / "eval.csv", csv);
    cli::write_echo(cfg);
    std::cout << "ARE " << fmt_double(are * inv) << "  delta1 " << fmt_double(delta1 * inv) << "\n";
    return 0;
}

// ---- report ------------------------------------------------------------

// Dark blue -> teal -> yellow ramp.
std::array<double, 3> colormap(double t) {
    static constexpr std::array<std::array<double, 3>, 5> stops{{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * (stops.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
    const double f = t - static_cast<double>(i);
    return {stops[i][0] + f * (stops[i + 1][0] - stops[i][0]), stops[i][1] + f * (stops[i + 1][1] - stops[i][1]),
            stops[i][2] + f * (stops[i + 1][2] - stops[i][2])};
}

RgbImage overlay(const RgbImage& base, const FloatMap& values, double lo, double hi, double alpha) {
    RgbImage out = base;
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < base.height; ++y) {
        for (int x = 0; x < base.width; ++x) {
            const std::size_t i = values.index(x, y);
            for (int c = 0; c < 3; ++c) {
                const std::size_t o = (i * 3) + static_cast<std::size_t>(c);
                if (!values.valid(i)) {
                    out.data[o] = 0;
                    continue;
                }
                const double col = colormap((values[i] - lo) / span)[static_cast<std::size_t>(c)];
                out.data[o] = static_cast<std::uint8_t>(std::lround(alpha * col + (1.0 - alpha) * base.data[o]));
            }
        }
    }
    return out;
}

int cmd_report(const RunConfig& cfg) {
    const std::vector<LoadedSample> samples = load_all(cli::require(cfg, "manifest").get<std::string>());
    const SigmaPolicy policy = sigma_policy(cfg);
    const double alpha = cfg.values.at("alpha").get<double>();
    const double max_error = cfg.values.at("max_error").get<double>();
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(max_error > 0.0)) {
        throw ParameterError("report: need alpha in [0, 1] and max_error > 0");
    }
    std::vector<FloatMap> preds(samples.size());
    for (std::size_t n = 0; n < samples.size(); ++n) preds[n] = read_pfm(prediction_path(cfg, samples[n].id));
    cli::prepare_output(cfg);

    json rows = json::array();
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const LoadedSample& s = samples[n];
        if (!preds[n].same_shape(s.depth_gt)) throw ShapeError("report: prediction for '" + s.id + "' has the wrong size");
        const FloatMap scaled = median_scale(preds[n], s.depth_gt);
        FloatMap error = FloatMap::like(s.depth_gt);
        for (std::size_t i = 0; i < error.size(); ++i) {
            if (scaled.valid(i) && s.depth_gt.valid(i)) {
                error[i] = std::abs(scaled[i] - s.depth_gt[i]) / s.depth_gt[i];
            } else {
                error.set_valid(i, false);
            }
        }
        double lo = 0.0, hi = 0.0;
        bool first = true;
        for (std::size_t i = 0; i < scaled.size(); ++i) {
            if (!scaled.valid(i)) continue;
            lo = first ? scaled[i] : std::min(lo, scaled[i]);
            hi = first ? scaled[i] : std::max(hi, scaled[i]);
            first = false;
        }
        write_ppm(overlay(s.image, scaled, lo, hi, alpha), cfg.out / (s.id + "_depth.ppm"));
        write_ppm(overlay(s.image, error, 0.0, max_error, alpha), cfg.out / (s.id + "_error.ppm"));
        json row{{"id", s.id}, {"depth", evaluate_depth(preds[n], s.depth_gt)},
                 {"keypoints", keypoint_metrics(preds[n], s.keypoints, s.rig)}, {"depth_range_mm", {lo, hi}}};
        if (!s.ensemble.empty()) {
            const FloatMap conf = ensemble_confidence(s, policy);
            write_ppm(overlay(s.image, conf, 0.0, 1.0, alpha), cfg.out / (s.id + "_confidence.ppm"));
            row["confidence_overlay"] = true;
        } else {
            row["confidence_overlay"] = false;
        }
        rows.push_back(std::move(row));
    }
    cli::write_text(cfg.out / "report.json", json{{"samples", rows}}.dump(2) + "\n");
    cli::write_echo(cfg);
    std::cout << "report for " << samples.size() << " samples written to " << cfg.out.string() << "\n";
    return 0;
}

// ---- train-head --------------------------------------------------------

int cmd_train_head(const RunConfig& cfg) {
    const SigmaPolicy policy = sigma_policy(cfg);
    const HeadTrainConfig hc = head_train_config(cfg.values.at("head"));
    const int count = cfg.values.at("train_samples").get<int>();
    if (count <= 0) throw ParameterError("train-head: train_samples must be positive");
    const std::vector<LoadedSample> samples = load_or_generate(cfg);
    cli::prepare_output(cfg);

    std::vector<double> curve;
    const HeadParams params = train_head_on_samples(samples, count, policy, hc, &curve);
    save_head(params, cfg.out / "head.bin");
    std::string csv = "epoch,bce\n";
    for (std::size_t e = 0; e < curve.size(); ++e) csv += std::to_string(e) + "," + fmt_double(curve[e]) + "\n";
    cli::write_text(cfg.out / "train_head.csv", csv);
    cli::write_text(cfg.out / "train_head.json",
                    json{{"head", head_train_json(hc)},
                         {"samples", std::min<std::size_t>(samples.size(), static_cast<std::size_t>(count))},
                         {"final_bce", curve.back()},
                         {"loss_curve", curve}}
                            .dump(2) + "\n");
    cli::write_echo(cfg);
    std::cout << "head trained, final BCE " << fmt_double(curve.back()) << "\n";
    return 0;
}

// ---- defaults ------------------------------------------------------------

json refine_defaults() { return RefineConfig{}; }

json benchmark_defaults() { return BenchmarkConfig{}; }

struct Command {
    const char* name;
    const char* help;
    json defaults;
    std::vector<std::string> optional;
    int (*run)(const RunConfig&);
};

std::vector<Command> commands() {
    json gen{{"seed", 2024},          {"count", 20},    {"width", 64},      {"height", 48},
             {"k", 5},                {"noise", {{"base_std_px", 0.04}, {"artifact_std_px", 0.16}}},
             {"coverage", 0.3},       {"bias", 1.5},    {"corrupt_threshold", 0.5}, {"keypoints", 24}};
    json conf = sigma_defaults();
    json refine = sigma_defaults();
    refine.update({{"refine", refine_defaults()}, {"init_perturbation", 0.03}, {"corrupt_threshold", 0.5}, {"seed", 0}});
    json ablate = sigma_defaults();
    ablate.erase("sigma_base");
    ablate.update({{"refine", refine_defaults()},
                   {"grid", json::array({{{"use_ch", false}, {"use_cal", false}},
                                         {{"use_ch", true}, {"use_cal", false}},
                                         {{"use_ch", false}, {"use_cal", true}},
                                         {{"use_ch", true}, {"use_cal", true}}})},
                   {"sigma_grid", {0.7}},
                   {"benchmark", benchmark_defaults()},
                   {"head", head_train_json(HeadTrainConfig{})},
                   {"head_train_samples", 4},
                   {"init_perturbation", 0.03},
                   {"corrupt_threshold", 0.5},
                   {"seed", 0}});
    json eval{{"pattern", "{id}_depth.pfm"}, {"mask", "all"}, {"corrupt_threshold", 0.5}};
    json report = sigma_defaults();
    report.update({{"pattern", "{id}_depth.pfm"}, {"alpha", 0.6}, {"max_error", 0.25}});
    json train = sigma_defaults();
    train.update({{"head", head_train_json(HeadTrainConfig{})}, {"train_samples", 4}, {"benchmark", benchmark_defaults()}});
    return {
        {"gen-data", "Generate a synthetic dataset", gen, {"rig", "scenes"}, cmd_gen_data},
        {"confidence", "Ensemble variance and confidence maps", conf, {"manifest"}, cmd_confidence},
        {"refine", "Refine depth under the confidence-aware loss", refine, {"manifest", "head"}, cmd_refine},
        {"ablate", "CH/CAL grid and sigma sweep", ablate, {"manifest"}, cmd_ablate},
        {"eval", "Depth and keypoint metrics of predictions", eval, {"manifest", "predictions"}, cmd_eval},
        {"report", "Colour-mapped overlays and metrics", report, {"manifest", "predictions"}, cmd_report},
        {"train-head", "Train the confidence head on ensemble labels", train, {"manifest"}, cmd_train_head},
    };
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Data: return 3;
        case ErrorKind::Numeric: return 4;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("confdepth");
    spdlog::set_default_logger(logger);
    spdlog::cfg::load_env_levels();

    CLI::App app{"confdepth: confidence-aware depth supervision tools"};
    app.require_subcommand(1);
    const auto table = commands();

    struct Parsed {
        std::string config;
        std::string out;
        bool force = false;
        bool print_defaults = false;
    };
    std::vector<Parsed> parsed(table.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < table.size(); ++i) {
        CLI::App* sub = app.add_subcommand(table[i].name, table[i].help);
        sub->add_option("-c,--config", parsed[i].config, "JSON config file");
        sub->add_option("-o,--out", parsed[i].out, "Output directory");
        sub->add_flag("--force", parsed[i].force, "Write into a non-empty output directory");
        sub->add_flag("--print-defaults", parsed[i].print_defaults, "Print the default config and exit");
        sub->allow_extras();
        sub->footer("Any other --key=value flag overrides a config field (dotted keys for nested fields).");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    for (std::size_t i = 0; i < table.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        if (parsed[i].print_defaults) {
            std::cout << table[i].defaults.dump(2) << "\n";
            return 0;
        }
        try {
            RunConfig cfg =
                cli::resolve_config(table[i].name, table[i].defaults, table[i].optional, parsed[i].config, subs[i]->remaining());
            cfg.out = parsed[i].out;
            cfg.force = parsed[i].force;
            return table[i].run(cfg);
        } catch (const Error& e) {
            spdlog::error("{}", e.what());
            return exit_code(e.kind());
        } catch (const json::exception& e) {
            spdlog::error("config: {}", e.what());
            return 2;
        } catch (const fs::filesystem_error& e) {
            spdlog::error("{}", e.what());
            return 3;
        } catch (const std::exception& e) {
            spdlog::error("{}", e.what());
            return 1;
        }
    }
    return 2;
}
