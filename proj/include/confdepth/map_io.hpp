#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confdepth/maps.hpp"
#include "confdepth/stereo_geometry.hpp"

namespace confdepth {

/// Reads a grayscale PFM ("Pf"). NaN and other non-finite samples come back
/// as invalid pixels holding 0.0.
FloatMap read_pfm(const std::filesystem::path& path);

/// Writes a little-endian grayscale PFM with bottom-up rows. Invalid pixels
/// are written as NaN; valid values are narrowed to float32.
void write_pfm(const FloatMap& map, const std::filesystem::path& path);

/// In-memory variants of the PFM codec.
FloatMap decode_pfm(const std::string& bytes);
std::string encode_pfm(const FloatMap& map);

RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

/// Reads a JSON array of {id, u_left, v_left, u_right, v_right}. Records
/// whose rows differ by more than `rectify_tolerance_px` are flagged
/// non-rectified rather than rejected.
std::vector<StereoKeypoint> read_keypoints(const std::filesystem::path& path, double rectify_tolerance_px = 1.0);
std::vector<StereoKeypoint> parse_keypoints(const std::string& text, double rectify_tolerance_px = 1.0);
void write_keypoints(const std::vector<StereoKeypoint>& keypoints, const std::filesystem::path& path);

/// One sample of a dataset manifest. Paths are relative to the manifest file.
struct ManifestSample {
    std::string id;
    std::filesystem::path image;
    std::filesystem::path depth_gt;
    std::vector<std::filesystem::path> ensemble;
    std::optional<std::filesystem::path> keypoints;
    std::optional<std::filesystem::path> corruption;   // true artifact strength, synthetic data only
    std::optional<std::filesystem::path> supervision;  // training depth when it differs from depth_gt
    std::string rig;
};

struct DatasetManifest {
    std::filesystem::path root;  // directory holding the manifest
    std::map<std::string, CameraRig> rigs;
    std::vector<ManifestSample> samples;

    std::filesystem::path resolve(const std::filesystem::path& relative) const { return root / relative; }
};

/// Parses the manifest and checks that rig ids resolve and that every
/// referenced file exists.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// A manifest sample with all of its files loaded.
struct LoadedSample {
    std::string id;
    RgbImage image;
    FloatMap depth_gt;
    FloatMap supervision;
    std::vector<FloatMap> ensemble;
    std::optional<FloatMap> corruption;
    std::vector<StereoKeypoint> keypoints;
    CameraRig rig;
};

/// Loads every file of `sample`; throws ShapeError when resolutions disagree.
LoadedSample load_sample(const DatasetManifest& manifest, const ManifestSample& sample);

/// Writes the samples as flat files plus `manifest.json` into `dir`.
/// Supervision is written only where it differs from depth_gt.
void write_dataset(const std::vector<LoadedSample>& samples, const std::filesystem::path& dir);

}  // namespace confdepth
