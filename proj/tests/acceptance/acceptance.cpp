// Acceptance gate: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cli_runner.hpp"
#include "confdepth/confidence_head.hpp"
#include "confdepth/ensemble_confidence.hpp"
#include "confdepth/errors.hpp"
#include "confdepth/losses.hpp"
#include "confdepth/map_io.hpp"
#include "confdepth/metrics.hpp"
#include "confdepth/refine_experiment.hpp"
#include "confdepth/stereo_geometry.hpp"
#include "gradcheck.hpp"
#include "head_oracle.hpp"

using namespace confdepth;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = o.ok;
    std::string detail = o.detail;
    if (limit_s > 0.0 && secs >= limit_s) {
        ok = false;
        detail += fmt::format("; runtime {:.1f}s exceeds {:.0f}s", secs, limit_s);
    }
    if (!ok) ++failures;
    std::printf("[%s] %2d %-28s %s (%.2fs)\n", ok ? "PASS" : "FAIL", id, name, detail.c_str(), secs);
    std::fflush(stdout);
}

FloatMap scaled(const FloatMap& m, double c) {
    FloatMap out = m;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return out;
}

// 1 --------------------------------------------------------------------------
Outcome confidence_exactness() {
    const std::vector<double> vars{0.0, 1e-9, 1e-4, 0.01, 0.1, 0.25, 0.5, 0.98, 1.0, 2.0, 3.7, 10.0, 50.0};
    const std::vector<double> sigmas{0.05, 0.1, 0.2, 0.35, 0.5, 0.7, 1.0, 1.4, 3.0};
    FloatMap var(static_cast<int>(vars.size()), 1);
    for (std::size_t i = 0; i < vars.size(); ++i) var[i] = vars[i];
    double worst = 0.0;
    for (double s : sigmas) {
        const FloatMap c = variance_to_confidence(var, s);
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const long double ref =
                std::exp(-static_cast<long double>(vars[i]) / (2.0L * static_cast<long double>(s) * s));
            worst = std::max(worst, static_cast<double>(std::fabs(static_cast<long double>(c[i]) - ref)));
        }
    }
    const double at_2s2 = variance_to_confidence(FloatMap(1, 1, 0.98), 0.7)[0];
    const bool ok = worst <= 1e-12 && std::fabs(at_2s2 - 0.3678794) < 5e-8;
    return {ok, fmt::format("max |P - exp_ld| = {:.2e} over {} pairs; var=2s^2 -> {:.7f}", worst,
                            vars.size() * sigmas.size(), at_2s2)};
}

// 2 --------------------------------------------------------------------------
Outcome ensemble_oracle() {
    double worst = 0.0;
    std::size_t mask_mismatch = 0;
    for (int n = 0; n < 100; ++n) {
        Rng rng(1000 + n);
        const int k = 2 + n % 6;
        std::vector<FloatMap> members;
        for (int m = 0; m < k; ++m) {
            FloatMap d = oracle::random_map(32, 32, -5.0, 60.0, rng);
            for (int j = 0; j < 8; ++j) d.set_valid(rng.next() % d.size(), false);
            members.push_back(std::move(d));
        }
        const EnsembleStats st = ensemble_mean_variance({members});
        for (std::size_t i = 0; i < 32 * 32; ++i) {
            bool valid = true;
            double sum = 0.0;
            for (const auto& d : members) {
                valid = valid && d.valid(i);
                sum += d[i];
            }
            if (valid != st.variance.valid(i) || valid != st.mean.valid(i)) ++mask_mismatch;
            if (!valid) continue;
            const double mean = sum / k;
            double ss = 0.0;
            for (const auto& d : members) ss += (d[i] - mean) * (d[i] - mean);
            worst = std::max({worst, std::fabs(st.mean[i] - mean), std::fabs(st.variance[i] - ss / k)});
        }
    }
    return {worst <= 1e-12 && mask_mismatch == 0,
            fmt::format("100 instances 32x32 K=2..7: max diff {:.2e}, mask mismatches {}", worst, mask_mismatch)};
}

// 3 --------------------------------------------------------------------------
Outcome gradient_suite() {
    const LossConfig cfg;
    constexpr int kInstances = 20;
    double silog = 0, grad = 0, edge = 0, bce_err = 0, head_p = 0, head_f = 0;
    std::size_t checked = 0, kinks = 0;
    auto take = [&](const oracle::GradCheck& r, double& worst) {
        worst = std::max(worst, r.max_rel);
        checked += r.checked;
        kinks += r.kinks;
    };
    for (int n = 0; n < kInstances; ++n) {
        Rng rng(5000 + n);
        {
            const FloatMap p = oracle::random_map(8, 8, 30.0, 200.0, rng);
            const FloatMap g = oracle::random_map(8, 8, 30.0, 200.0, rng);
            const FloatMap c = oracle::random_map(8, 8, 0.0, 1.0, rng);
            take(oracle::check_map_gradient([&](const FloatMap& d) { return silog_conf(d, g, c, cfg).value; }, p,
                                            silog_conf(p, g, c, cfg).grad),
                 silog);
        }
        {
            const FloatMap p = oracle::random_map(16, 16, 30.0, 200.0, rng);
            const FloatMap g = oracle::random_map(16, 16, 30.0, 200.0, rng);
            const FloatMap c = oracle::random_map(16, 16, 0.0, 1.0, rng);
            take(oracle::check_map_gradient([&](const FloatMap& d) { return grad_match_conf(d, g, c, cfg).value; },
                                            p, grad_match_conf(p, g, c, cfg).grad),
                 grad);
        }
        {
            const FloatMap p = oracle::random_map(12, 10, 30.0, 200.0, rng);
            const FloatMap c = oracle::random_map(12, 10, 0.0, 1.0, rng);
            const RgbImage img = oracle::random_image(12, 10, rng);
            take(oracle::check_map_gradient(
                     [&](const FloatMap& d) { return edge_smooth_conf(d, img, c, cfg).value; }, p,
                     edge_smooth_conf(p, img, c, cfg).grad),
                 edge);
        }
        {
            const FloatMap p = oracle::random_map(9, 7, 0.01, 0.99, rng);
            const FloatMap t = oracle::random_map(9, 7, 0.0, 1.0, rng);
            take(oracle::check_map_gradient([&](const FloatMap& q) { return bce(q, t).value; }, p, bce(p, t).grad),
                 bce_err);
        }
        {
            const FeatureMap f = oracle::random_features(5, 4, 3, rng);
            const HeadParams hp = oracle::random_params(3, rng);
            const FloatMap up = oracle::random_map(5, 4, -1.0, 1.0, rng);
            const auto r = oracle::check_head_gradient(f, hp, up);
            head_p = std::max(head_p, r.max_rel_params);
            head_f = std::max(head_f, r.max_rel_features);
            checked += r.checked;
            kinks += r.kinks;
        }
    }
    const bool ok = silog < 1e-5 && grad < 1e-5 && edge < 1e-5 && bce_err < 1e-5 && head_p < 1e-4 && head_f < 1e-5;
    return {ok, fmt::format("max rel err silog {:.1e} grad {:.1e} edge {:.1e} bce {:.1e} head params {:.1e} "
                            "head features {:.1e}; {} entries checked, {} kinks skipped, {} instances each",
                            silog, grad, edge, bce_err, head_p, head_f, checked, kinks, kInstances)};
}

// 4 --------------------------------------------------------------------------
Outcome loss_identities() {
    Rng rng(77);
    const LossConfig cfg;
    const FloatMap d = oracle::random_map(16, 12, 40.0, 180.0, rng);
    const FloatMap p = oracle::random_map(16, 12, 40.0, 180.0, rng);
    const FloatMap c = oracle::random_map(16, 12, 0.05, 1.0, rng);
    const RgbImage img = oracle::random_image(16, 12, rng);

    const double s0 = silog_conf(d, d, c, cfg).value;
    const double se = silog_conf(scaled(d, std::numbers::e), d, c, cfg).value;
    double gm = 0.0;
    for (double k : {0.2, 1.7, 40.0}) gm = std::max(gm, std::fabs(grad_match_conf(scaled(d, k), d, c, cfg).value));
    const double e0 = edge_smooth_conf(p, img, c, cfg).value;
    double edge_dev = 0.0;
    for (double k : {0.01, 2.5, 1e3}) edge_dev = std::max(edge_dev, std::fabs(edge_smooth_conf(scaled(p, k), img, c, cfg).value - e0));
    const LossBreakdown b = total_loss(p, d, c, img, cfg);
    const double add = std::fabs(b.total - (b.silog_conf + b.grad_conf + b.edge_conf));
    const LossTerm ts = silog_conf(p, d, c, cfg), tg = grad_match_conf(p, d, c, cfg), te = edge_smooth_conf(p, img, c, cfg);
    double add_grad = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        add_grad = std::max(add_grad, std::fabs(b.grad_wrt_pred[i] - (ts.grad[i] + tg.grad[i] + te.grad[i])));
    }
    const bool ok = s0 == 0.0 && std::fabs(se - 0.5) <= 1e-9 && gm <= 1e-12 && edge_dev <= 1e-9 && add <= 1e-12 &&
                    add_grad <= 1e-12;
    return {ok, fmt::format("silog(d,d)={}, silog(e*d,d)-0.5={:.1e}, grad(c*d,d)={:.1e}, edge scale dev {:.1e}, "
                            "total additivity {:.1e} (grad {:.1e})",
                            s0, se - 0.5, gm, edge_dev, add, add_grad)};
}

// 5 --------------------------------------------------------------------------
Outcome linearity() {
    Rng rng(8);
    double worst = 0.0;
    bool zero_ok = true;
    for (int n = 0; n < 10; ++n) {
        const FloatMap l = oracle::random_map(17, 13, 0.0, 4.0, rng);
        const double base = confidence_weight(l, FloatMap(17, 13, 1.0));
        for (double c : {0.0, 0.25, 0.5, 1.0}) {
            const double v = confidence_weight(l, FloatMap(17, 13, c));
            if (c == 0.0) zero_ok = zero_ok && v == 0.0;
            else worst = std::max(worst, std::fabs(v - c * base) / std::fabs(c * base));
        }
    }
    return {zero_ok && worst < 1e-12, fmt::format("max relative error {:.1e}; c=0 gives 0: {}", worst, zero_ok)};
}

// 6 --------------------------------------------------------------------------
Outcome metric_units() {
    Rng rng(9);
    const FloatMap gt = oracle::random_map(24, 18, 50.0, 200.0, rng);
    const double d12 = compute_delta1(scaled(gt, 1.2), gt);
    const double d13 = compute_delta1(scaled(gt, 1.3), gt);
    const double are = compute_are(scaled(gt, 1.1), gt);
    std::size_t mismatches = 0;
    for (int n = 0; n < 20; ++n) {
        const FloatMap g = oracle::random_map(24, 18, 50.0, 200.0, rng);
        const FloatMap p = oracle::random_map(24, 18, 30.0, 260.0, rng);
        const DepthMetrics base = evaluate_depth(p, g);
        for (double c : {0.1, 3.0, 100.0}) {
            const DepthMetrics m = evaluate_depth(scaled(p, c), g);
            if (m.are != base.are || m.delta1 != base.delta1) ++mismatches;
        }
    }
    const bool ok = d12 == 1.0 && d13 == 0.0 && std::fabs(are - 0.1) <= 1e-12 && mismatches == 0;
    return {ok, fmt::format("delta1(1.2gt)={}, delta1(1.3gt)={}, ARE(1.1gt)-0.1={:.1e}, scale-invariance "
                            "mismatches {}/60",
                            d12, d13, are - 0.1, mismatches)};
}

// 7 --------------------------------------------------------------------------
Outcome triangulation() {
    Rng rng(10);
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
        const CameraRig rig{rng.uniform(200.0, 1500.0), rng.uniform(2.0, 10.0), rng.uniform(0.0, 640.0),
                            rng.uniform(0.0, 480.0)};
        const Point3D p{rng.uniform(-40.0, 40.0), rng.uniform(-30.0, 30.0), rng.uniform(20.0, 300.0)};
        const Point3D q = triangulate_keypoint(project_keypoint(p, rig), rig);
        worst = std::max({worst, std::fabs(q.x_mm - p.x_mm), std::fabs(q.y_mm - p.y_mm), std::fabs(q.z_mm - p.z_mm)});
    }
    const double z = triangulate_keypoint({0, 150.0, 0.0, 100.0, 0.0, true}, {1000.0, 5.0, 0.0, 0.0}).z_mm;
    return {worst < 1e-6 && z == 100.0, fmt::format("1000 points max error {:.2e} mm; worked example Z={}", worst, z)};
}

// 8 --------------------------------------------------------------------------
Outcome confidence_corruption() {
    BenchmarkConfig cfg;  // K=5, artifact_std = 4 * base_std
    const auto samples = make_corrupted_benchmark(cfg);
    double worst = -1.0;
    double lib_dev = 0.0;
    for (const auto& s : samples) {
        const FloatMap conf = ensemble_confidence(s, {});
        std::vector<double> a(conf.values().begin(), conf.values().end());
        std::vector<double> b(s.corruption->values().begin(), s.corruption->values().end());
        const double rho = oracle::spearman(a, b);
        worst = std::max(worst, rho);
        lib_dev = std::max(lib_dev, std::fabs(rho - spearman_rho(conf, *s.corruption)));
    }
    return {worst < -0.5 && samples.size() == 20,
            fmt::format("{} samples, max rho {:.3f} (library vs oracle {:.1e})", samples.size(), worst, lib_dev)};
}

AblationConfig benchmark_ablation(std::vector<RefineConfig> grid, std::vector<double> sigmas) {
    AblationConfig cfg;
    cfg.grid = std::move(grid);
    cfg.sigma_grid = std::move(sigmas);
    return cfg;
}

RefineConfig cell(bool ch, bool cal) {
    RefineConfig rc;
    rc.use_ch = ch;
    rc.use_cal = cal;
    return rc;
}

// 9 --------------------------------------------------------------------------
Outcome ablation_direction(const std::vector<LoadedSample>& samples) {
    const ExperimentReport r =
        run_ablation(samples, benchmark_ablation({cell(false, false), cell(false, true), cell(true, true)}, {0.7}));
    const double uniform = r.rows[0].are_clean;
    const double cal = r.rows[1].are_clean;
    const double full = r.rows[2].are_clean;
    const double reduction = 1.0 - cal / uniform;
    const bool ok = reduction >= 0.20 && full <= cal * 1.02;
    return {ok, fmt::format("ARE_clean uniform {:.6f}, CAL {:.6f} ({:.1f}% lower, need >= 20%), CH+CAL {:.6f} "
                            "({:+.1f}% vs CAL, need <= +2%)",
                            uniform, cal, 100.0 * reduction, full, 100.0 * (full / cal - 1.0))};
}

// 10 -------------------------------------------------------------------------
Outcome sigma_sweep(const std::vector<LoadedSample>& samples) {
    const std::vector<double> sigmas{0.2, 0.5, 0.7, 1.0};
    const ExperimentReport r = run_ablation(samples, benchmark_ablation({cell(false, true)}, sigmas));
    std::vector<double> d1;
    std::string trace;
    for (const auto& row : r.rows) {
        d1.push_back(row.delta1_all);
        trace += fmt::format(" s={}:{:.4f}", row.sigma, row.delta1_all);
    }
    const double best = std::max(d1[1], d1[2]);
    const bool ok = best > d1[0] && best > d1[3];
    return {ok, "delta1_all (CAL)" + trace + (ok ? "; interior maximum" : "; no strict interior maximum")};
}

// 11 -------------------------------------------------------------------------
Outcome head_training() {
    const auto task = separable_head_task(4, 32, 24, 11);
    HeadTrainConfig cfg;
    cfg.epochs = 500;
    cfg.seed = 3;
    const HeadTrainResult a = train_head(task, cfg);
    const HeadTrainResult b = train_head(task, cfg);
    std::vector<double> score;
    std::vector<int> label;
    for (const auto& s : task) {
        const FloatMap p = head_forward(s.features, a.params);
        for (std::size_t i = 0; i < p.size(); ++i) {
            score.push_back(p[i]);
            label.push_back(s.target[i] > 0.5 ? 1 : 0);
        }
    }
    const double auc = oracle::auc_pairs(score, label);
    const double final_bce = a.loss_curve.back();
    const bool same = a.params == b.params && a.loss_curve == b.loss_curve;
    return {final_bce < 0.1 && auc > 0.95 && same,
            fmt::format("500 epochs: BCE {:.4f}, AUC {:.4f}, replay bit-identical: {}", final_bce, auc, same)};
}

// 12 -------------------------------------------------------------------------
Outcome cli_replay() {
    const fs::path root = cli_runner::fresh_dir("acceptance_replay");
    const fs::path first = root / "first";
    const fs::path second = root / "second";
    const std::string data = (first / "data").string();
    const std::string manifest = data + "/manifest.json";
    const std::string preds = (first / "refine").string();
    const std::vector<std::pair<std::string, std::string>> runs{
        {"data", "gen-data --count=2 --width=32 --height=24 --keypoints=6 "
                 "'--rig={\"focal_px\":60,\"baseline_mm\":5,\"cx_px\":16,\"cy_px\":12}'"},
        {"confidence", "confidence --manifest=" + manifest},
        {"refine", "refine --manifest=" + manifest + " --refine.iters=20"},
        {"train-head", "train-head --manifest=" + manifest + " --head.epochs=20 --train_samples=2"},
        {"ablate", "ablate --manifest=" + manifest + " --refine.iters=10 --head.epochs=10 --head_train_samples=1"},
        {"eval", "eval --manifest=" + manifest + " --predictions=" + preds},
        {"report", "report --manifest=" + manifest + " --predictions=" + preds},
    };
    std::vector<std::string> bad;
    for (const auto& [name, args] : runs) {
        const auto r = cli_runner::run(args + " -o " + cli_runner::quote((first / name).string()), root);
        if (r.code != 0) return {false, name + " exited " + std::to_string(r.code) + ": " + r.err};
    }
    for (const auto& [name, args] : runs) {
        const std::string command = args.substr(0, args.find(' '));
        const auto r = cli_runner::run(command + " -c " + cli_runner::quote((first / name / "config.json").string()) +
                                           " -o " + cli_runner::quote((second / name).string()),
                                       root);
        if (r.code != 0) return {false, "replay of " + name + " exited " + std::to_string(r.code) + ": " + r.err};
        const auto a = cli_runner::snapshot(first / name);
        const auto b = cli_runner::snapshot(second / name);
        if (a != b || a.empty()) bad.push_back(name);
    }
    std::string names;
    for (const auto& [name, args] : runs) names += (names.empty() ? "" : ",") + name;
    return {bad.empty(), bad.empty() ? "replayed " + names + " from their config echo: byte-identical"
                                     : "outputs differ after replay: " + fmt::format("{}", fmt::join(bad, ","))};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    criterion(1, "confidence-exactness", 1.0, confidence_exactness);
    criterion(2, "ensemble-oracle", 5.0, ensemble_oracle);
    criterion(3, "gradient-suite", 60.0, gradient_suite);
    criterion(4, "loss-identities", 0.0, loss_identities);
    criterion(5, "confidence-linearity", 0.0, linearity);
    criterion(6, "metric-units", 0.0, metric_units);
    criterion(7, "triangulation-roundtrip", 0.0, triangulation);
    criterion(8, "confidence-corruption-rho", 30.0, confidence_corruption);

    std::vector<LoadedSample> bench;
    const auto t0 = std::chrono::steady_clock::now();
    bench = make_corrupted_benchmark(BenchmarkConfig{});
    const double gen_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    criterion(9, "ablation-direction", 120.0 - gen_s, [&] { return ablation_direction(bench); });
    criterion(10, "sigma-sweep-shape", 120.0 - gen_s, [&] { return sigma_sweep(bench); });
    criterion(11, "head-training", 60.0, head_training);
    criterion(12, "cli-replay", 0.0, cli_replay);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
