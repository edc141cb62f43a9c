#include "confdepth/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "confdepth/errors.hpp"
#include "confdepth/rng.hpp"

namespace confdepth {

namespace {

using Vec3 = std::array<double, 3>;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Ray parameter t along r = ((u-cx)/f, (v-cy)/f, 1), so t is the hit depth.
std::optional<double> intersect(const Primitive& p, const Vec3& r) {
    switch (p.kind) {
        case Primitive::Kind::Plane: {
            const double denom = dot(p.normal, r);
            if (std::abs(denom) < 1e-12) return std::nullopt;
            const double t = dot(p.normal, p.center_mm) / denom;
            if (t > 0.0) return t;
            return std::nullopt;
        }
        case Primitive::Kind::SphereCap: {
            const double a = dot(r, r);
            const double b = -2.0 * dot(r, p.center_mm);
            const double c = dot(p.center_mm, p.center_mm) - p.radius_mm * p.radius_mm;
            const double disc = b * b - 4.0 * a * c;
            if (disc < 0.0) return std::nullopt;
            const double sq = std::sqrt(disc);
            const double t0 = (-b - sq) / (2.0 * a);
            const double t1 = (-b + sq) / (2.0 * a);
            if (t0 > 0.0) return t0;
            if (t1 > 0.0) return t1;
            return std::nullopt;
        }
        case Primitive::Kind::GaussianBump: {
            const double two_s2 = 2.0 * p.sigma_mm * p.sigma_mm;
            auto surface_z = [&](double t) {
                const double dx = t * r[0] - p.center_mm[0];
                const double dy = t * r[1] - p.center_mm[1];
                return p.center_mm[2] - p.amplitude_mm * std::exp(-(dx * dx + dy * dy) / two_s2);
            };
            // f(t) = t - z(t) is negative near the camera and positive beyond the base.
            double lo = 1e-3;
            double hi = p.center_mm[2] + std::abs(p.amplitude_mm) + 1.0;
            if (lo - surface_z(lo) >= 0.0 || hi - surface_z(hi) <= 0.0) return std::nullopt;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mid - surface_z(mid) < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
    }
    return std::nullopt;
}

// Smooth value noise in [0,1] on a lattice of `cell` pixels.
class ValueNoise {
public:
    ValueNoise(std::uint64_t seed, int width, int height, double cell)
        : cell_(cell), gw_(static_cast<int>(width / cell) + 2), gh_(static_cast<int>(height / cell) + 2) {
        Rng rng(seed);
        lattice_.resize(static_cast<std::size_t>(gw_) * static_cast<std::size_t>(gh_));
        for (auto& v : lattice_) v = rng.uniform();
    }

    double operator()(double x, double y) const {
        const double gx = x / cell_;
        const double gy = y / cell_;
        const int ix = std::clamp(static_cast<int>(gx), 0, gw_ - 2);
        const int iy = std::clamp(static_cast<int>(gy), 0, gh_ - 2);
        const double fx = smooth(gx - ix);
        const double fy = smooth(gy - iy);
        const double a = at(ix, iy) * (1 - fx) + at(ix + 1, iy) * fx;
        const double b = at(ix, iy + 1) * (1 - fx) + at(ix + 1, iy + 1) * fx;
        return a * (1 - fy) + b * fy;
    }

private:
    static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
    double at(int x, int y) const { return lattice_[static_cast<std::size_t>(y) * gw_ + x]; }

    double cell_;
    int gw_;
    int gh_;
    std::vector<double> lattice_;
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

RgbImage gaussian_blur(const RgbImage& image, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= norm;

    const int w = image.width;
    const int h = image.height;
    std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = std::clamp(x + i, 0, w - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * image.at(xx, y, c);
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
        }
    }
    RgbImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = std::clamp(y + i, 0, h - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
                }
                out.at(x, y, c) = to_byte(acc);
            }
        }
    }
    return out;
}

}  // namespace

void SceneSpec::validate() const {
    if (width <= 0 || height <= 0) {
        throw ValidationError("scene: width and height must be positive");
    }
    rig.validate();
    if (primitives.empty()) {
        throw ValidationError("scene: primitive list is empty");
    }
    if (!(z_min > 0.0) || !(z_max > z_min)) {
        throw ValidationError("scene: depth range must satisfy 0 < z_min < z_max");
    }
}

SyntheticSample gen_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int w = spec.width;
    const int h = spec.height;
    const CameraRig& rig = spec.rig;

    SyntheticSample s;
    s.rig = rig;
    s.depth_gt = FloatMap(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 r{(x - rig.cx_px) / rig.focal_px, (y - rig.cy_px) / rig.focal_px, 1.0};
            double z = spec.z_max;
            bool hit = false;
            for (const auto& p : spec.primitives) {
                if (auto t = intersect(p, r); t && (!hit || *t < z)) {
                    z = *t;
                    hit = true;
                }
            }
            s.depth_gt(x, y) = std::clamp(z, spec.z_min, spec.z_max);
        }
    }
    s.disparity_gt = depth_to_disparity(s.depth_gt, rig);
    s.corruption = FloatMap(w, h, 0.0);

    // Headlight Lambertian shading of a procedurally textured, tissue-coloured albedo.
    const std::uint64_t tex_seed = spec.texture_seed ^ (seed * 0x9E3779B97F4A7C15ull);
    const ValueNoise coarse(tex_seed, w, h, std::max(4.0, w / 8.0));
    const ValueNoise fine(tex_seed + 1, w, h, std::max(2.0, w / 24.0));
    auto point = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        const double z = s.depth_gt(x, y);
        return Vec3{(x - rig.cx_px) / rig.focal_px * z, (y - rig.cy_px) / rig.focal_px * z, z};
    };
    s.image = RgbImage(w, h);
    constexpr std::array<double, 3> tissue{0.86, 0.42, 0.38};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 px = point(x, y);
            const Vec3 ddx{point(x + 1, y)[0] - point(x - 1, y)[0], point(x + 1, y)[1] - point(x - 1, y)[1],
                           point(x + 1, y)[2] - point(x - 1, y)[2]};
            const Vec3 ddy{point(x, y + 1)[0] - point(x, y - 1)[0], point(x, y + 1)[1] - point(x, y - 1)[1],
                           point(x, y + 1)[2] - point(x, y - 1)[2]};
            Vec3 n = cross(ddx, ddy);
            const double nn = std::sqrt(dot(n, n));
            const double pn = std::sqrt(dot(px, px));
            double shade = 1.0;
            if (nn > 0.0 && pn > 0.0) {
                shade = std::abs(dot(n, px)) / (nn * pn);
            }
            const double albedo = 0.55 + 0.3 * coarse(x, y) + 0.15 * fine(x, y);
            const double light = albedo * (0.3 + 0.7 * shade);
            for (int c = 0; c < 3; ++c) {
                s.image.at(x, y, c) = to_byte(255.0 * light * tissue[static_cast<std::size_t>(c)] + 20.0);
            }
        }
    }
    return s;
}

double artifact_weight(const ArtifactSpec& a, double x, double y) {
    const double dx = (x - a.center_x) / a.radius_x;
    const double dy = (y - a.center_y) / a.radius_y;
    const double rho = std::sqrt(dx * dx + dy * dy);
    if (rho <= 0.5) return 1.0;
    if (rho >= 1.0) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (rho - 0.5) / 0.5));
}

SyntheticSample inject_artifacts(SyntheticSample sample, const std::vector<ArtifactSpec>& artifacts,
                                 std::uint64_t seed) {
    const int w = sample.image.width;
    const int h = sample.image.height;
    if (!sample.corruption.same_shape(sample.depth_gt) || sample.corruption.empty()) {
        sample.corruption = FloatMap(w, h, 0.0);
    }
    for (std::size_t n = 0; n < artifacts.size(); ++n) {
        const ArtifactSpec& a = artifacts[n];
        if (!(a.radius_x > 0.0) || !(a.radius_y > 0.0) || !(a.strength >= 0.0 && a.strength <= 1.0)) {
            throw ValidationError("artifact " + std::to_string(n) + ": radii must be > 0 and strength in [0,1]");
        }
        const ValueNoise haze(seed + 7919 * (n + 1), w, h, std::max(3.0, w / 10.0));
        const RgbImage blurred = a.kind == ArtifactKind::Blur ? gaussian_blur(sample.image, std::max(1.5, w / 32.0))
                                                              : RgbImage{};
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double alpha = a.strength * artifact_weight(a, x, y);
                if (alpha <= 0.0) continue;
                sample.corruption(x, y) = std::min(1.0, sample.corruption(x, y) + alpha);
                for (int c = 0; c < 3; ++c) {
                    const double p = sample.image.at(x, y, c);
                    double v = p;
                    switch (a.kind) {
                        case ArtifactKind::Specular:
                            v = p + alpha * (255.0 - p);
                            break;
                        case ArtifactKind::Smoke: {
                            const double fog = 185.0 + 30.0 * haze(x, y);
                            v = p + 0.85 * alpha * (fog - p);
                            break;
                        }
                        case ArtifactKind::Blur:
                            v = p + alpha * (blurred.at(x, y, c) - p);
                            break;
                        case ArtifactKind::Occlusion:
                            v = p + alpha * ((c == 0 ? 28.0 : 22.0) - p);
                            break;
                    }
                    sample.image.at(x, y, c) = to_byte(v);
                }
            }
        }
    }
    return sample;
}

SyntheticSample simulate_ensemble(SyntheticSample sample, int k, const EnsembleNoise& noise, std::uint64_t seed) {
    if (k < 2) {
        throw ValidationError("simulate_ensemble: K must be >= 2, got " + std::to_string(k));
    }
    if (noise.base_std_px < 0.0 || noise.artifact_std_px < 0.0) {
        throw ValidationError("simulate_ensemble: noise standard deviations must be non-negative");
    }
    const FloatMap& gt = sample.disparity_gt;
    const int w = gt.width();
    const int h = gt.height();
    const bool has_corruption = sample.corruption.same_shape(gt);
    sample.ensemble.members.clear();
    for (int m = 0; m < k; ++m) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(m));
        const double fx = rng.uniform(-1.5, 1.5);
        const double fy = rng.uniform(-1.5, 1.5);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        FloatMap member = FloatMap::like(gt);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = gt.index(x, y);
                const double bias = noise.base_std_px *
                                    std::sin(2.0 * std::numbers::pi * (fx * x / w + fy * y / h) + phase);
                const double c = has_corruption ? sample.corruption[i] : 0.0;
                const double std_px = noise.base_std_px + c * noise.artifact_std_px;
                const double eps = rng.normal();
                member[i] = gt.valid(i) ? gt[i] + bias + std_px * eps : 0.0;
            }
        }
        sample.ensemble.members.push_back(std::move(member));
    }
    return sample;
}

SceneSpec random_scene_spec(std::uint64_t seed, int width, int height, const CameraRig& rig) {
    Rng rng = Rng::derive(seed, 0x5CE4E);
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.rig = rig;
    spec.texture_seed = rng.next();

    const double z_back = rng.uniform(130.0, 170.0);
    // Half extent of the field of view at the background depth.
    const double half_x = 0.5 * width / rig.focal_px * z_back;
    const double half_y = 0.5 * height / rig.focal_px * z_back;

    Primitive plane;
    plane.kind = Primitive::Kind::Plane;
    plane.center_mm = {0.0, 0.0, z_back};
    plane.normal = {rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), -1.0};
    spec.primitives.push_back(plane);

    const int bumps = 1 + static_cast<int>(rng.uniform() * 3.0);
    for (int b = 0; b < bumps; ++b) {
        Primitive bump;
        bump.kind = Primitive::Kind::GaussianBump;
        bump.center_mm = {rng.uniform(-0.7, 0.7) * half_x, rng.uniform(-0.7, 0.7) * half_y,
                          z_back + 20.0};
        bump.amplitude_mm = rng.uniform(25.0, 60.0);
        bump.sigma_mm = rng.uniform(0.15, 0.35) * half_x;
        spec.primitives.push_back(bump);
    }
    if (rng.uniform() < 0.5) {
        Primitive sphere;
        sphere.kind = Primitive::Kind::SphereCap;
        sphere.radius_mm = rng.uniform(0.3, 0.5) * half_x;
        sphere.center_mm = {rng.uniform(-0.5, 0.5) * half_x, rng.uniform(-0.5, 0.5) * half_y,
                            z_back - rng.uniform(0.2, 0.6) * sphere.radius_mm};
        spec.primitives.push_back(sphere);
    }
    return spec;
}

std::vector<ArtifactSpec> random_artifacts(std::uint64_t seed, int width, int height, double coverage) {
    Rng rng = Rng::derive(seed, 0xA27F);
    std::vector<ArtifactSpec> out;
    FloatMap strength(width, height, 0.0);
    auto covered = [&]() {
        std::size_t n = 0;
        for (std::size_t i = 0; i < strength.size(); ++i) n += strength[i] >= 0.5 ? 1 : 0;
        return static_cast<double>(n) / static_cast<double>(strength.size());
    };
    constexpr std::array<ArtifactKind, 4> kinds{ArtifactKind::Specular, ArtifactKind::Smoke, ArtifactKind::Blur,
                                                ArtifactKind::Occlusion};
    const double scale = std::min(width, height);
    int guard = 0;
    while (covered() < coverage && guard++ < 200) {
        ArtifactSpec a;
        a.kind = kinds[static_cast<std::size_t>(rng.uniform() * 4.0) % 4];
        a.center_x = rng.uniform(0.1, 0.9) * width;
        a.center_y = rng.uniform(0.1, 0.9) * height;
        a.radius_x = rng.uniform(0.18, 0.32) * scale;
        a.radius_y = rng.uniform(0.18, 0.32) * scale;
        a.strength = rng.uniform(0.85, 1.0);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                strength(x, y) = std::min(1.0, strength(x, y) + a.strength * artifact_weight(a, x, y));
            }
        }
        out.push_back(a);
    }
    return out;
}

std::vector<StereoKeypoint> sample_keypoints(const SyntheticSample& sample, int count, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x4B9);
    std::vector<StereoKeypoint> out;
    const int w = sample.depth_gt.width();
    const int h = sample.depth_gt.height();
    for (int n = 0; n < count; ++n) {
        const int x = std::min(static_cast<int>(rng.uniform() * w), w - 1);
        const int y = std::min(static_cast<int>(rng.uniform() * h), h - 1);
        if (!sample.depth_gt.valid(x, y)) continue;
        const double z = sample.depth_gt(x, y);
        const Point3D p{(x - sample.rig.cx_px) * z / sample.rig.focal_px,
                        (y - sample.rig.cy_px) * z / sample.rig.focal_px, z};
        StereoKeypoint kp = project_keypoint(p, sample.rig);
        kp.id = n;
        kp.u_left = x;
        kp.v_left = y;
        kp.v_right = y;
        kp.u_right = x - sample.rig.focal_px * sample.rig.baseline_mm / z;
        if (kp.u_right < 0.0) continue;
        out.push_back(kp);
    }
    return out;
}

std::string to_string(ArtifactKind kind) {
    switch (kind) {
        case ArtifactKind::Specular: return "specular";
        case ArtifactKind::Smoke: return "smoke";
        case ArtifactKind::Blur: return "blur";
        case ArtifactKind::Occlusion: return "occlusion";
    }
    return "unknown";
}

ArtifactKind artifact_kind_from_string(const std::string& name) {
    if (name == "specular") return ArtifactKind::Specular;
    if (name == "smoke") return ArtifactKind::Smoke;
    if (name == "blur") return ArtifactKind::Blur;
    if (name == "occlusion") return ArtifactKind::Occlusion;
    throw ValidationError("unknown artifact kind '" + name + "'");
}

void to_json(nlohmann::json& j, const Primitive& p) {
    switch (p.kind) {
        case Primitive::Kind::Plane:
            j = {{"type", "plane"}, {"point_mm", p.center_mm}, {"normal", p.normal}};
            break;
        case Primitive::Kind::SphereCap:
            j = {{"type", "sphere_cap"}, {"center_mm", p.center_mm}, {"radius_mm", p.radius_mm}};
            break;
        case Primitive::Kind::GaussianBump:
            j = {{"type", "gaussian_bump"},
                 {"center_mm", p.center_mm},
                 {"amplitude_mm", p.amplitude_mm},
                 {"sigma_mm", p.sigma_mm}};
            break;
    }
}

void from_json(const nlohmann::json& j, Primitive& p) {
    const std::string type = j.value("type", std::string{});
    auto vec = [&](const char* key) {
        if (!j.contains(key)) throw ValidationError(std::string("primitive: missing field '") + key + "'");
        return j.at(key).get<std::array<double, 3>>();
    };
    auto num = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number()) {
            throw ValidationError(std::string("primitive: missing numeric field '") + key + "'");
        }
        return j.at(key).get<double>();
    };
    if (type == "plane") {
        p.kind = Primitive::Kind::Plane;
        p.center_mm = vec("point_mm");
        p.normal = j.contains("normal") ? vec("normal") : std::array<double, 3>{0.0, 0.0, -1.0};
    } else if (type == "sphere_cap") {
        p.kind = Primitive::Kind::SphereCap;
        p.center_mm = vec("center_mm");
        p.radius_mm = num("radius_mm");
    } else if (type == "gaussian_bump") {
        p.kind = Primitive::Kind::GaussianBump;
        p.center_mm = vec("center_mm");
        p.amplitude_mm = num("amplitude_mm");
        p.sigma_mm = num("sigma_mm");
    } else {
        throw ValidationError("primitive: unknown type '" + type + "'");
    }
}

void to_json(nlohmann::json& j, const ArtifactSpec& a) {
    j = {{"kind", to_string(a.kind)},
         {"center_px", {a.center_x, a.center_y}},
         {"radii_px", {a.radius_x, a.radius_y}},
         {"strength", a.strength}};
}

void from_json(const nlohmann::json& j, ArtifactSpec& a) {
    if (!j.contains("kind") || !j.contains("center_px") || !j.contains("radii_px")) {
        throw ValidationError("artifact: requires 'kind', 'center_px' and 'radii_px'");
    }
    a.kind = artifact_kind_from_string(j.at("kind").get<std::string>());
    const auto c = j.at("center_px").get<std::array<double, 2>>();
    const auto r = j.at("radii_px").get<std::array<double, 2>>();
    a.center_x = c[0];
    a.center_y = c[1];
    a.radius_x = r[0];
    a.radius_y = r[1];
    a.strength = j.value("strength", 1.0);
}

}  // namespace confdepth
