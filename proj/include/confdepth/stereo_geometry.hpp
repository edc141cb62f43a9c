#pragma once

#include <nlohmann/json.hpp>

#include "confdepth/maps.hpp"

namespace confdepth {

/// Rectified stereo pair sharing one principal point.
struct CameraRig {
    double focal_px = 0.0;
    double baseline_mm = 0.0;
    double cx_px = 0.0;
    double cy_px = 0.0;

    /// Throws ValidationError unless focal_px > 0 and baseline_mm > 0.
    void validate() const;

    friend bool operator==(const CameraRig&, const CameraRig&) = default;
};

struct Point3D {
    double x_mm = 0.0;
    double y_mm = 0.0;
    double z_mm = 0.0;
};

/// A keypoint annotated in both views of a rectified pair.
struct StereoKeypoint {
    int id = 0;
    double u_left = 0.0;
    double v_left = 0.0;
    double u_right = 0.0;
    double v_right = 0.0;
    bool rectified = true;  // false when |v_left - v_right| exceeds the reader's tolerance

    double disparity() const noexcept { return u_left - u_right; }
};

/// depth = f*B/disparity; pixels with disparity <= 0 become invalid.
FloatMap disparity_to_depth(const FloatMap& disparity, const CameraRig& rig);

/// disparity = f*B/depth; pixels with depth <= 0 become invalid.
FloatMap depth_to_disparity(const FloatMap& depth, const CameraRig& rig);

Point3D triangulate_keypoint(const StereoKeypoint& kp, const CameraRig& rig);
StereoKeypoint project_keypoint(const Point3D& p, const CameraRig& rig);

void to_json(nlohmann::json& j, const CameraRig& rig);
void from_json(const nlohmann::json& j, CameraRig& rig);

}  // namespace confdepth
