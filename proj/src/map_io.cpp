#include "confdepth/map_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "confdepth/errors.hpp"

namespace confdepth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

// Minimal cursor over a Netpbm-style ASCII header.
class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

    std::string token(bool allow_comments) {
        skip_space(allow_comments);
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            ++pos_;
        }
        return bytes_.substr(start, pos_ - start);
    }

    // The header ends with exactly one whitespace byte before the payload.
    bool consume_single_space() {
        if (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::size_t position() const noexcept { return pos_; }

private:
    void skip_space(bool allow_comments) {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (allow_comments && c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

int parse_dimension(const std::string& token, const char* what) {
    try {
        std::size_t used = 0;
        const long value = std::stol(token, &used);
        if (used != token.size()) {
            throw CorruptFileError(std::string("malformed ") + what + " '" + token + "'");
        }
        if (value <= 0 || value > std::numeric_limits<int>::max() / 4) {
            throw InvalidDimensionsError(std::string("invalid ") + what + " " + token);
        }
        return static_cast<int>(value);
    } catch (const std::logic_error&) {
        throw CorruptFileError(std::string("malformed ") + what + " '" + token + "'");
    }
}

std::uint32_t byteswap32(std::uint32_t v) {
    return ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) | ((v & 0x00FF0000u) >> 8) | ((v & 0xFF000000u) >> 24);
}

double required_number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw ValidationError(where + ": missing numeric field '" + key + "'");
    }
    return j.at(key).get<double>();
}

}  // namespace

FloatMap decode_pfm(const std::string& bytes) {
    HeaderReader header(bytes);
    const std::string magic = header.token(false);
    if (magic == "PF") {
        throw UnsupportedFormatError("colour PFM ('PF') is not supported; expected grayscale 'Pf'");
    }
    if (magic != "Pf") {
        throw CorruptFileError("not a PFM file (magic '" + magic + "')");
    }
    const int width = parse_dimension(header.token(false), "width");
    const int height = parse_dimension(header.token(false), "height");
    const std::string scale_token = header.token(false);
    double scale = 0.0;
    try {
        scale = std::stod(scale_token);
    } catch (const std::logic_error&) {
        throw CorruptFileError("malformed PFM scale '" + scale_token + "'");
    }
    if (scale == 0.0 || !std::isfinite(scale) || !header.consume_single_space()) {
        throw CorruptFileError("malformed PFM scale line");
    }
    const bool file_little = scale < 0.0;
    const bool host_little = std::endian::native == std::endian::little;

    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    const std::size_t offset = header.position();
    if (bytes.size() - offset < count * sizeof(float)) {
        throw CorruptFileError("truncated PFM payload: expected " + std::to_string(count * sizeof(float)) +
                               " bytes, found " + std::to_string(bytes.size() - offset));
    }

    FloatMap map(width, height);
    const char* payload = bytes.data() + offset;
    for (int row = 0; row < height; ++row) {
        const int y = height - 1 - row;
        for (int x = 0; x < width; ++x) {
            std::uint32_t raw = 0;
            std::memcpy(&raw, payload + (static_cast<std::size_t>(row) * width + x) * sizeof(float), sizeof(raw));
            if (file_little != host_little) {
                raw = byteswap32(raw);
            }
            const float value = std::bit_cast<float>(raw);
            const std::size_t i = map.index(x, y);
            if (std::isfinite(value)) {
                map[i] = static_cast<double>(value);
            } else {
                map[i] = 0.0;
                map.set_valid(i, false);
            }
        }
    }
    return map;
}

std::string encode_pfm(const FloatMap& map) {
    if (map.width() <= 0 || map.height() <= 0) {
        throw InvalidDimensionsError("cannot write a " + std::to_string(map.width()) + "x" +
                                     std::to_string(map.height()) + " map as PFM");
    }
    std::string out = "Pf\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n-1.0\n";
    const std::size_t header = out.size();
    out.resize(header + map.size() * sizeof(float));
    const bool host_little = std::endian::native == std::endian::little;
    char* payload = out.data() + header;
    for (int row = 0; row < map.height(); ++row) {
        const int y = map.height() - 1 - row;
        for (int x = 0; x < map.width(); ++x) {
            const float value =
                map.valid(x, y) ? static_cast<float>(map(x, y)) : std::numeric_limits<float>::quiet_NaN();
            std::uint32_t raw = std::bit_cast<std::uint32_t>(value);
            if (!host_little) {
                raw = byteswap32(raw);
            }
            std::memcpy(payload + (static_cast<std::size_t>(row) * map.width() + x) * sizeof(float), &raw,
                        sizeof(raw));
        }
    }
    return out;
}

FloatMap read_pfm(const fs::path& path) {
    try {
        return decode_pfm(read_file(path));
    } catch (const CorruptFileError& e) {
        throw CorruptFileError(path.string() + ": " + e.what());
    }
}

void write_pfm(const FloatMap& map, const fs::path& path) { write_file(path, encode_pfm(map)); }

RgbImage read_ppm(const fs::path& path) {
    const std::string bytes = read_file(path);
    HeaderReader header(bytes);
    const std::string magic = header.token(true);
    if (magic != "P6") {
        throw UnsupportedFormatError(path.string() + ": expected binary PPM 'P6', found '" + magic + "'");
    }
    const int width = parse_dimension(header.token(true), "width");
    const int height = parse_dimension(header.token(true), "height");
    const std::string maxval = header.token(true);
    if (maxval != "255") {
        throw UnsupportedFormatError(path.string() + ": only 8-bit PPM (maxval 255) is supported");
    }
    if (!header.consume_single_space()) {
        throw CorruptFileError(path.string() + ": malformed PPM header");
    }
    RgbImage image(width, height);
    if (bytes.size() - header.position() < image.data.size()) {
        throw CorruptFileError(path.string() + ": truncated PPM payload");
    }
    std::memcpy(image.data.data(), bytes.data() + header.position(), image.data.size());
    return image;
}

void write_ppm(const RgbImage& image, const fs::path& path) {
    if (image.width <= 0 || image.height <= 0 ||
        image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw InvalidDimensionsError("cannot write PPM with inconsistent dimensions");
    }
    std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.data.data()), image.data.size());
    write_file(path, out);
}

std::vector<StereoKeypoint> parse_keypoints(const std::string& text, double rectify_tolerance_px) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("keypoints: ") + e.what());
    }
    if (!doc.is_array()) {
        throw ParseError("keypoints: expected a JSON array");
    }
    std::vector<StereoKeypoint> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& rec = doc[i];
        const std::string where = "keypoints[" + std::to_string(i) + "]";
        if (!rec.is_object()) {
            throw ParseError(where + ": expected an object");
        }
        StereoKeypoint kp;
        if (!rec.contains("id") || !rec.at("id").is_number_integer()) {
            throw ValidationError(where + ": missing integer field 'id'");
        }
        kp.id = rec.at("id").get<int>();
        kp.u_left = required_number(rec, "u_left", where);
        kp.v_left = required_number(rec, "v_left", where);
        kp.u_right = required_number(rec, "u_right", where);
        kp.v_right = required_number(rec, "v_right", where);
        for (double c : {kp.u_left, kp.v_left, kp.u_right, kp.v_right}) {
            if (c < 0.0) {
                throw ValidationError(where + ": negative pixel coordinate");
            }
        }
        kp.rectified = std::abs(kp.v_left - kp.v_right) <= rectify_tolerance_px;
        out.push_back(kp);
    }
    return out;
}

std::vector<StereoKeypoint> read_keypoints(const fs::path& path, double rectify_tolerance_px) {
    return parse_keypoints(read_file(path), rectify_tolerance_px);
}

void write_keypoints(const std::vector<StereoKeypoint>& keypoints, const fs::path& path) {
    json doc = json::array();
    for (const auto& kp : keypoints) {
        doc.push_back({{"id", kp.id},
                       {"u_left", kp.u_left},
                       {"v_left", kp.v_left},
                       {"u_right", kp.u_right},
                       {"v_right", kp.v_right}});
    }
    write_file(path, doc.dump(2) + "\n");
}

DatasetManifest read_manifest(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("manifest '" + path.string() + "': " + e.what());
    }
    DatasetManifest manifest;
    manifest.root = path.parent_path();

    if (!doc.contains("rigs") || !doc.at("rigs").is_object()) {
        throw ValidationError("manifest: missing object 'rigs'");
    }
    for (const auto& [id, rig] : doc.at("rigs").items()) {
        try {
            manifest.rigs[id] = rig.get<CameraRig>();
        } catch (const ValidationError& e) {
            throw ValidationError("manifest: rigs." + id + ": " + e.what());
        }
    }
    if (!doc.contains("samples") || !doc.at("samples").is_array()) {
        throw ValidationError("manifest: missing array 'samples'");
    }

    const auto& samples = doc.at("samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const json& rec = samples[i];
        const std::string where = "manifest: samples[" + std::to_string(i) + "]";
        auto path_field = [&](const char* key) -> fs::path {
            if (!rec.contains(key) || !rec.at(key).is_string()) {
                throw ValidationError(where + ": missing string field '" + key + "'");
            }
            return fs::path(rec.at(key).get<std::string>());
        };
        ManifestSample s;
        s.id = rec.value("id", "sample" + std::to_string(i));
        s.image = path_field("image");
        s.depth_gt = path_field("depth_gt");
        s.rig = rec.value("rig", std::string{});
        if (!manifest.rigs.contains(s.rig)) {
            throw ValidationError(where + ".rig: unknown rig id '" + s.rig + "'");
        }
        if (rec.contains("ensemble")) {
            for (const auto& p : rec.at("ensemble")) {
                s.ensemble.emplace_back(p.get<std::string>());
            }
        }
        if (rec.contains("keypoints")) s.keypoints = path_field("keypoints");
        if (rec.contains("corruption")) s.corruption = path_field("corruption");
        if (rec.contains("supervision")) s.supervision = path_field("supervision");

        std::vector<fs::path> referenced{s.image, s.depth_gt};
        referenced.insert(referenced.end(), s.ensemble.begin(), s.ensemble.end());
        for (const auto& opt : {s.keypoints, s.corruption, s.supervision}) {
            if (opt) referenced.push_back(*opt);
        }
        for (const auto& rel : referenced) {
            if (!fs::exists(manifest.resolve(rel))) {
                throw IoError(where + ": referenced file '" + rel.string() + "' does not exist");
            }
        }
        manifest.samples.push_back(std::move(s));
    }
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    json doc;
    doc["rigs"] = json::object();
    for (const auto& [id, rig] : manifest.rigs) {
        doc["rigs"][id] = rig;
    }
    doc["samples"] = json::array();
    for (const auto& s : manifest.samples) {
        json rec{{"id", s.id}, {"image", s.image.generic_string()}, {"depth_gt", s.depth_gt.generic_string()},
                 {"rig", s.rig}};
        json ens = json::array();
        for (const auto& p : s.ensemble) ens.push_back(p.generic_string());
        rec["ensemble"] = ens;
        if (s.keypoints) rec["keypoints"] = s.keypoints->generic_string();
        if (s.corruption) rec["corruption"] = s.corruption->generic_string();
        if (s.supervision) rec["supervision"] = s.supervision->generic_string();
        doc["samples"].push_back(std::move(rec));
    }
    write_file(path, doc.dump(2) + "\n");
}

LoadedSample load_sample(const DatasetManifest& manifest, const ManifestSample& sample) {
    LoadedSample out;
    out.id = sample.id;
    out.rig = manifest.rigs.at(sample.rig);
    out.image = read_ppm(manifest.resolve(sample.image));
    out.depth_gt = read_pfm(manifest.resolve(sample.depth_gt));
    out.supervision = sample.supervision ? read_pfm(manifest.resolve(*sample.supervision)) : out.depth_gt;
    for (const auto& p : sample.ensemble) {
        out.ensemble.push_back(read_pfm(manifest.resolve(p)));
    }
    if (sample.corruption) out.corruption = read_pfm(manifest.resolve(*sample.corruption));
    if (sample.keypoints) out.keypoints = read_keypoints(manifest.resolve(*sample.keypoints));

    const int w = out.depth_gt.width();
    const int h = out.depth_gt.height();
    auto check = [&](int mw, int mh, const std::string& what) {
        if (mw != w || mh != h) {
            throw ShapeError("sample '" + sample.id + "': " + what + " is " + std::to_string(mw) + "x" +
                             std::to_string(mh) + " but depth_gt is " + std::to_string(w) + "x" +
                             std::to_string(h));
        }
    };
    check(out.image.width, out.image.height, "image");
    check(out.supervision.width(), out.supervision.height(), "supervision");
    for (std::size_t k = 0; k < out.ensemble.size(); ++k) {
        check(out.ensemble[k].width(), out.ensemble[k].height(), "ensemble[" + std::to_string(k) + "]");
    }
    if (out.corruption) check(out.corruption->width(), out.corruption->height(), "corruption");
    return out;
}

void write_dataset(const std::vector<LoadedSample>& samples, const fs::path& dir) {
    fs::create_directories(dir);
    DatasetManifest manifest;
    manifest.root = dir;
    for (const auto& s : samples) {
        std::string rig_id;
        for (const auto& [id, rig] : manifest.rigs) {
            if (rig == s.rig) rig_id = id;
        }
        if (rig_id.empty()) {
            rig_id = "rig" + std::to_string(manifest.rigs.size());
            manifest.rigs[rig_id] = s.rig;
        }

        ManifestSample m;
        m.id = s.id;
        m.rig = rig_id;
        m.image = s.id + "_image.ppm";
        write_ppm(s.image, dir / m.image);
        m.depth_gt = s.id + "_depth_gt.pfm";
        write_pfm(s.depth_gt, dir / m.depth_gt);
        if (!(s.supervision == s.depth_gt)) {
            m.supervision = s.id + "_supervision.pfm";
            write_pfm(s.supervision, dir / *m.supervision);
        }
        for (std::size_t k = 0; k < s.ensemble.size(); ++k) {
            m.ensemble.push_back(s.id + "_ens" + std::to_string(k) + ".pfm");
            write_pfm(s.ensemble[k], dir / m.ensemble.back());
        }
        if (s.corruption) {
            m.corruption = s.id + "_corruption.pfm";
            write_pfm(*s.corruption, dir / *m.corruption);
        }
        if (!s.keypoints.empty()) {
            m.keypoints = s.id + "_keypoints.json";
            write_keypoints(s.keypoints, dir / *m.keypoints);
        }
        manifest.samples.push_back(std::move(m));
    }
    write_manifest(manifest, dir / "manifest.json");
}

}  // namespace confdepth
