#include "confdepth/stereo_geometry.hpp"

#include <cmath>
#include <string>

#include "confdepth/errors.hpp"

namespace confdepth {

void CameraRig::validate() const {
    if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
        throw ValidationError("camera rig: focal_px must be > 0, got " + std::to_string(focal_px));
    }
    if (!(baseline_mm > 0.0) || !std::isfinite(baseline_mm)) {
        throw ValidationError("camera rig: baseline_mm must be > 0, got " + std::to_string(baseline_mm));
    }
}

namespace {

// Both conversions are the same reciprocal map; only the name of the input changes.
FloatMap reciprocal_map(const FloatMap& in, const CameraRig& rig) {
    rig.validate();
    const double fb = rig.focal_px * rig.baseline_mm;
    FloatMap out = FloatMap::like(in);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in.valid(i) && in[i] > 0.0) {
            out[i] = fb / in[i];
        } else {
            out[i] = 0.0;
            out.set_valid(i, false);
        }
    }
    return out;
}

}  // namespace

FloatMap disparity_to_depth(const FloatMap& disparity, const CameraRig& rig) { return reciprocal_map(disparity, rig); }

FloatMap depth_to_disparity(const FloatMap& depth, const CameraRig& rig) { return reciprocal_map(depth, rig); }

Point3D triangulate_keypoint(const StereoKeypoint& kp, const CameraRig& rig) {
    rig.validate();
    const double disp = kp.disparity();
    if (!(disp > 0.0)) {
        throw TriangulationError("keypoint " + std::to_string(kp.id) + ": non-positive disparity " +
                                 std::to_string(disp));
    }
    const double z = rig.focal_px * rig.baseline_mm / disp;
    return {(kp.u_left - rig.cx_px) * z / rig.focal_px, (kp.v_left - rig.cy_px) * z / rig.focal_px, z};
}

StereoKeypoint project_keypoint(const Point3D& p, const CameraRig& rig) {
    rig.validate();
    if (!(p.z_mm > 0.0)) {
        throw ProjectionError("cannot project point with z_mm = " + std::to_string(p.z_mm));
    }
    StereoKeypoint kp;
    kp.u_left = rig.focal_px * p.x_mm / p.z_mm + rig.cx_px;
    kp.v_left = rig.focal_px * p.y_mm / p.z_mm + rig.cy_px;
    kp.v_right = kp.v_left;
    kp.u_right = kp.u_left - rig.focal_px * rig.baseline_mm / p.z_mm;
    return kp;
}

void to_json(nlohmann::json& j, const CameraRig& rig) {
    j = nlohmann::json{{"focal_px", rig.focal_px},
                       {"baseline_mm", rig.baseline_mm},
                       {"cx_px", rig.cx_px},
                       {"cy_px", rig.cy_px}};
}

void from_json(const nlohmann::json& j, CameraRig& rig) {
    for (const char* key : {"focal_px", "baseline_mm", "cx_px", "cy_px"}) {
        if (!j.contains(key) || !j.at(key).is_number()) {
            throw ValidationError(std::string("camera rig: missing numeric field '") + key + "'");
        }
    }
    rig.focal_px = j.at("focal_px").get<double>();
    rig.baseline_mm = j.at("baseline_mm").get<double>();
    rig.cx_px = j.at("cx_px").get<double>();
    rig.cy_px = j.at("cy_px").get<double>();
    rig.validate();
}

}  // namespace confdepth
