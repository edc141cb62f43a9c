#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confdepth/confidence_head.hpp"
#include "confdepth/ensemble_confidence.hpp"
#include "confdepth/losses.hpp"
#include "confdepth/map_io.hpp"
#include "confdepth/maps.hpp"
#include "confdepth/synthetic_data.hpp"

namespace confdepth {

/// Gradient-descent refinement of a depth field under the confidence-aware
/// objective. Stands in for network training: the depth field itself is the
/// optimised variable.
struct RefineConfig {
    double lr = 2.0e4;
    int iters = 300;
    double momentum = 0.9;
    bool use_cal = true;   // weight the loss by confidence; otherwise uniform confidence 1
    bool use_ch = false;   // take confidence from the trained head instead of ensemble labels
    double z_min = 1.0;    // mm, clamp applied after every step
    double z_max = 1000.0;
    LossConfig loss;

    void validate() const;
    std::string label() const;  // e.g. "CH-CAL+"
};

/// Returns the depth after `cfg.iters` momentum steps starting from `init`.
/// When `loss_curve` is given it receives the total loss before every step
/// and after the last one.
FloatMap refine_depth(const FloatMap& init, const FloatMap& supervision, const FloatMap& conf,
                      const RgbImage& image, const RefineConfig& cfg, std::vector<double>* loss_curve = nullptr);

/// Starting point for refinement: supervision times a smooth multiplicative
/// perturbation of relative amplitude `amplitude`.
FloatMap perturbed_init(const FloatMap& supervision, double amplitude, std::uint64_t seed);

/// Parameters of the corrupted-supervision benchmark.
struct BenchmarkConfig {
    int count = 20;
    int width = 64;
    int height = 48;
    double focal_px = 60.0;
    double baseline_mm = 5.0;
    int k = 5;
    EnsembleNoise noise{0.04, 0.16};
    double coverage = 0.30;     // fraction of pixels whose supervision is biased
    double bias = 1.5;          // multiplicative depth bias on those pixels
    double corrupt_threshold = 0.5;  // corruption level at which supervision is biased
    int keypoints = 24;
    std::uint64_t seed = 2024;
};

/// Synthetic scenes with artifacts, a simulated ensemble and supervision
/// depth biased on the artifact pixels.
std::vector<LoadedSample> make_corrupted_benchmark(const BenchmarkConfig& cfg);

/// Sample `index` of the benchmark rendered with an explicit rig (the
/// focal_px/baseline_mm fields of `cfg` are ignored).
LoadedSample corrupted_sample(const BenchmarkConfig& cfg, const CameraRig& rig, std::size_t index);

/// Rig used by make_corrupted_benchmark: principal point at the image centre.
CameraRig benchmark_rig(const BenchmarkConfig& cfg);

/// 1 where the supervision equals the ground truth, 0 elsewhere.
FloatMap clean_mask(const LoadedSample& sample, double corrupt_threshold = 0.5);

struct AblationConfig {
    std::vector<RefineConfig> grid;
    std::vector<double> sigma_grid{0.7};
    SigmaPolicy sigma_policy;       // sigma_base is replaced by each grid sigma
    HeadTrainConfig head;           // used for cells with use_ch
    int head_train_samples = 4;     // leading samples used to train the head
    double init_perturbation = 0.03;
    double corrupt_threshold = 0.5;
    std::uint64_t seed = 0;
};

/// Mean metrics of one (config, sigma) cell over all samples.
struct AblationRow {
    bool use_ch = false;
    bool use_cal = false;
    double sigma = 0.0;
    std::string eval_mask;  // name of the evaluation mask, e.g. "clean" or "clean&head"
    double are_clean = 0.0;
    double delta1_clean = 0.0;
    double are_all = 0.0;
    double delta1_all = 0.0;
    double mae_mm = 0.0;
    double acc_2mm = 0.0;
    std::size_t keypoints = 0;
    double final_loss = 0.0;
    std::vector<double> mean_loss_curve;
};

struct ExperimentReport {
    std::vector<AblationRow> rows;
    nlohmann::json config_echo;
    std::vector<std::uint64_t> seeds;
    std::string substitution_note;
};

ExperimentReport run_ablation(const std::vector<LoadedSample>& samples, const AblationConfig& cfg);
ExperimentReport run_ablation(const DatasetManifest& manifest, const AblationConfig& cfg);

/// Confidence labels of a sample from its ensemble at the given sigma.
FloatMap ensemble_confidence(const LoadedSample& sample, const SigmaPolicy& policy);

/// Head trained on the leading `count` samples against ensemble labels.
HeadParams train_head_on_samples(const std::vector<LoadedSample>& samples, int count, const SigmaPolicy& policy,
                                 const HeadTrainConfig& cfg, std::vector<double>* loss_curve = nullptr);

/// Head confidence for one sample.
FloatMap head_confidence(const LoadedSample& sample, const HeadParams& params, const SigmaPolicy& policy);

/// Head training task whose features are artifact-strength channels
/// (strength, 1 - strength) and whose targets are 1 where strength < 0.5.
std::vector<HeadSample> separable_head_task(int count, int width, int height, std::uint64_t seed);

std::string ablation_csv(const ExperimentReport& report);
nlohmann::json ablation_json(const ExperimentReport& report);

void to_json(nlohmann::json& j, const RefineConfig& cfg);
void from_json(const nlohmann::json& j, RefineConfig& cfg);
void to_json(nlohmann::json& j, const BenchmarkConfig& cfg);
void from_json(const nlohmann::json& j, BenchmarkConfig& cfg);

}  // namespace confdepth
