#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confdepth/ensemble_confidence.hpp"
#include "confdepth/maps.hpp"
#include "confdepth/stereo_geometry.hpp"

namespace confdepth {

/// Surface primitive in camera coordinates (mm, +z forward).
struct Primitive {
    enum class Kind { Plane, SphereCap, GaussianBump };
    Kind kind = Kind::Plane;
    // Plane: a point on the plane. Sphere: its centre. Bump: (x, y) of the
    // peak and the z of the flat base it rises from.
    std::array<double, 3> center_mm{0.0, 0.0, 100.0};
    std::array<double, 3> normal{0.0, 0.0, -1.0};  // plane only
    double radius_mm = 0.0;                        // sphere only
    double amplitude_mm = 0.0;                     // bump: height towards the camera
    double sigma_mm = 1.0;                         // bump: lateral extent
};

struct SceneSpec {
    int width = 64;
    int height = 48;
    CameraRig rig;
    std::vector<Primitive> primitives;
    std::uint64_t texture_seed = 0;
    double z_min = 50.0;
    double z_max = 200.0;

    void validate() const;
};

enum class ArtifactKind { Specular, Smoke, Blur, Occlusion };

/// Elliptical artifact: full strength inside half the radii, cosine falloff
/// to zero at the ellipse boundary.
struct ArtifactSpec {
    ArtifactKind kind = ArtifactKind::Specular;
    double center_x = 0.0;
    double center_y = 0.0;
    double radius_x = 1.0;
    double radius_y = 1.0;
    double strength = 1.0;
};

struct EnsembleNoise {
    double base_std_px = 0.0;
    double artifact_std_px = 0.0;
};

struct SyntheticSample {
    CameraRig rig;
    RgbImage image;
    FloatMap depth_gt;      // mm
    FloatMap disparity_gt;  // px
    FloatMap corruption;    // true artifact strength in [0,1]
    EnsembleDisparities ensemble;
};

/// Ray-casts the primitives on the pinhole grid and shades the result.
SyntheticSample gen_scene(const SceneSpec& spec, std::uint64_t seed);

/// Corrupts the image in each artifact region and records the per-pixel
/// strength, clamped to [0,1] where regions overlap.
SyntheticSample inject_artifacts(SyntheticSample sample, const std::vector<ArtifactSpec>& artifacts,
                                 std::uint64_t seed);

/// Fills `sample.ensemble` with K disparity maps: ground truth plus a smooth
/// per-member bias field (amplitude base_std_px) plus Gaussian noise with
/// per-pixel std base_std_px + corruption * artifact_std_px.
SyntheticSample simulate_ensemble(SyntheticSample sample, int k, const EnsembleNoise& noise, std::uint64_t seed);

/// Weight of an artifact at pixel (x, y): 1 on the inner half, cosine
/// falloff to 0 at the boundary.
double artifact_weight(const ArtifactSpec& artifact, double x, double y);

/// Random endoscopy-like scene: a tilted background plane plus bumps and
/// sphere caps, all within [z_min, z_max].
SceneSpec random_scene_spec(std::uint64_t seed, int width, int height, const CameraRig& rig);

/// Random artifacts of mixed kinds, added until at least `coverage` of the
/// pixels have corruption >= 0.5.
std::vector<ArtifactSpec> random_artifacts(std::uint64_t seed, int width, int height, double coverage);

/// Stereo keypoints at random integer pixels, consistent with the ground truth.
std::vector<StereoKeypoint> sample_keypoints(const SyntheticSample& sample, int count, std::uint64_t seed);

std::string to_string(ArtifactKind kind);
ArtifactKind artifact_kind_from_string(const std::string& name);

void to_json(nlohmann::json& j, const Primitive& p);
void from_json(const nlohmann::json& j, Primitive& p);
void to_json(nlohmann::json& j, const ArtifactSpec& a);
void from_json(const nlohmann::json& j, ArtifactSpec& a);

}  // namespace confdepth
