#include "confdepth/confidence_head.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "confdepth/errors.hpp"
#include "confdepth/losses.hpp"
#include "confdepth/rng.hpp"

namespace confdepth {

namespace fs = std::filesystem;

HeadParams::HeadParams(int channels_in)
    : c_in(channels_in),
      w1(static_cast<std::size_t>(9) * static_cast<std::size_t>(channels_in) * kHeadHidden, 0.0f),
      b1(kHeadHidden, 0.0f),
      w2(kHeadHidden, 0.0f) {
    if (channels_in <= 0) {
        throw ParameterError("confidence head needs at least one input channel");
    }
}

HeadParams HeadParams::initialize(int channels_in, std::uint64_t seed) {
    HeadParams p(channels_in);
    Rng rng(seed);
    const double bound1 = 1.0 / std::sqrt(9.0 * channels_in);
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(kHeadHidden));
    for (auto& w : p.w1) w = static_cast<float>(rng.uniform(-bound1, bound1));
    for (auto& b : p.b1) b = static_cast<float>(rng.uniform(-bound1, bound1));
    for (auto& w : p.w2) w = static_cast<float>(rng.uniform(-bound2, bound2));
    p.b2 = static_cast<float>(rng.uniform(-bound2, bound2));
    return p;
}

namespace {

void check_features(const FeatureMap& features, const HeadParams& params) {
    if (features.channels != params.c_in) {
        throw ShapeError("confidence head expects " + std::to_string(params.c_in) + " input channels, got " +
                         std::to_string(features.channels));
    }
    if (features.data.size() != features.plane() * static_cast<std::size_t>(features.channels)) {
        throw ShapeError("feature map data size does not match its dimensions");
    }
}

// Hidden pre-activations of one pixel.
void hidden_preactivation(const FeatureMap& f, const HeadParams& p, int x, int y,
                          std::array<double, kHeadHidden>& h) {
    for (int k = 0; k < kHeadHidden; ++k) h[k] = p.b1[k];
    for (int ky = 0; ky < 3; ++ky) {
        const int yy = y + ky - 1;
        if (yy < 0 || yy >= f.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
            const int xx = x + kx - 1;
            if (xx < 0 || xx >= f.width) continue;
            for (int c = 0; c < p.c_in; ++c) {
                const double v = f.at(c, xx, yy);
                if (v == 0.0) continue;
                const float* w = &p.w1[p.w1_index(ky, kx, c, 0)];
                for (int k = 0; k < kHeadHidden; ++k) h[k] += w[k] * v;
            }
        }
    }
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

FloatMap head_forward(const FeatureMap& features, const HeadParams& params) {
    check_features(features, params);
    FloatMap out(features.width, features.height);
    std::array<double, kHeadHidden> h{};
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x) {
            hidden_preactivation(features, params, x, y, h);
            double z = params.b2;
            for (int k = 0; k < kHeadHidden; ++k) {
                if (h[k] > 0.0) z += params.w2[k] * h[k];
            }
            out(x, y) = sigmoid(z);
        }
    }
    return out;
}

HeadGrads head_backward(const FeatureMap& features, const HeadParams& params, const FloatMap& upstream) {
    check_features(features, params);
    if (upstream.width() != features.width || upstream.height() != features.height) {
        throw ShapeError("head_backward: upstream gradient shape does not match the features");
    }
    HeadGrads g;
    g.w1.assign(params.w1.size(), 0.0);
    g.b1.assign(kHeadHidden, 0.0);
    g.w2.assign(kHeadHidden, 0.0);
    g.features = FeatureMap(features.width, features.height, features.channels);

    std::array<double, kHeadHidden> h{};
    std::array<double, kHeadHidden> dh{};
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x) {
            const double up = upstream.valid(x, y) ? upstream(x, y) : 0.0;
            if (up == 0.0) continue;
            hidden_preactivation(features, params, x, y, h);
            double z = params.b2;
            for (int k = 0; k < kHeadHidden; ++k) {
                if (h[k] > 0.0) z += params.w2[k] * h[k];
            }
            const double p = sigmoid(z);
            const double dz = up * p * (1.0 - p);
            g.b2 += dz;
            bool any = false;
            for (int k = 0; k < kHeadHidden; ++k) {
                if (h[k] > 0.0) {
                    g.w2[k] += dz * h[k];
                    dh[k] = dz * params.w2[k];
                    g.b1[k] += dh[k];
                    any = any || dh[k] != 0.0;
                } else {
                    dh[k] = 0.0;
                }
            }
            if (!any) continue;
            for (int ky = 0; ky < 3; ++ky) {
                const int yy = y + ky - 1;
                if (yy < 0 || yy >= features.height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int xx = x + kx - 1;
                    if (xx < 0 || xx >= features.width) continue;
                    for (int c = 0; c < params.c_in; ++c) {
                        const double v = features.at(c, xx, yy);
                        const std::size_t base = params.w1_index(ky, kx, c, 0);
                        double df = 0.0;
                        for (int k = 0; k < kHeadHidden; ++k) {
                            g.w1[base + k] += dh[k] * v;
                            df += dh[k] * params.w1[base + k];
                        }
                        g.features.at(c, xx, yy) += df;
                    }
                }
            }
        }
    }
    return g;
}

HeadTrainResult train_head(const std::vector<HeadSample>& samples, const HeadTrainConfig& cfg) {
    if (samples.empty()) {
        throw ValidationError("train_head: no training samples");
    }
    return train_head(samples, cfg, HeadParams::initialize(samples.front().features.channels, cfg.seed));
}

HeadTrainResult train_head(const std::vector<HeadSample>& samples, const HeadTrainConfig& cfg, HeadParams init) {
    if (samples.empty()) {
        throw ValidationError("train_head: no training samples");
    }
    if (!(cfg.lr > 0.0) || cfg.epochs < 0) {
        throw ParameterError("train_head: lr must be > 0 and epochs >= 0");
    }
    const int c_in = init.c_in;
    for (const auto& s : samples) {
        if (s.features.channels != c_in) {
            throw ValidationError("train_head: inconsistent input channel counts across samples");
        }
        if (s.target.width() != s.features.width || s.target.height() != s.features.height) {
            throw ShapeError("train_head: target and feature shapes differ");
        }
    }

    HeadTrainResult result{std::move(init), {}};
    HeadParams& params = result.params;
    const double inv_s = 1.0 / static_cast<double>(samples.size());

    for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
        std::vector<double> gw1(params.w1.size(), 0.0);
        std::vector<double> gb1(kHeadHidden, 0.0);
        std::vector<double> gw2(kHeadHidden, 0.0);
        double gb2 = 0.0;
        double loss = 0.0;
        const bool last = epoch == cfg.epochs;
        for (const auto& s : samples) {
            const FloatMap pred = head_forward(s.features, params);
            const LossTerm term = bce(pred, s.target, cfg.bce_epsilon);
            loss += term.value * inv_s;
            if (last) continue;
            const HeadGrads g = head_backward(s.features, params, term.grad);
            for (std::size_t i = 0; i < gw1.size(); ++i) gw1[i] += g.w1[i] * inv_s;
            for (int k = 0; k < kHeadHidden; ++k) {
                gb1[k] += g.b1[k] * inv_s;
                gw2[k] += g.w2[k] * inv_s;
            }
            gb2 += g.b2 * inv_s;
        }
        result.loss_curve.push_back(loss);
        spdlog::debug("train_head epoch {} bce {:.6f}", epoch, loss);
        if (last) break;
        for (std::size_t i = 0; i < gw1.size(); ++i) params.w1[i] -= static_cast<float>(cfg.lr * gw1[i]);
        for (int k = 0; k < kHeadHidden; ++k) {
            params.b1[k] -= static_cast<float>(cfg.lr * gb1[k]);
            params.w2[k] -= static_cast<float>(cfg.lr * gw2[k]);
        }
        params.b2 -= static_cast<float>(cfg.lr * gb2);
    }
    return result;
}

FeatureMap engineered_features(const RgbImage& image, const FloatMap& ensemble_variance, double sigma_eff) {
    if (image.width != ensemble_variance.width() || image.height != ensemble_variance.height()) {
        throw ShapeError("engineered_features: image and variance shapes differ");
    }
    if (!(sigma_eff > 0.0)) {
        throw ParameterError("engineered_features: sigma must be positive");
    }
    const int w = image.width;
    const int h = image.height;
    const FloatMap gray = grayscale(image);
    FeatureMap f(w, h, kEngineeredChannels);
    const double inv_s2 = 1.0 / (sigma_eff * sigma_eff);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            double var_sum = 0.0;
            int n = 0;
            int nv = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx;
                    const int yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                    sum += gray(xx, yy);
                    ++n;
                    if (ensemble_variance.valid(xx, yy)) {
                        var_sum += ensemble_variance(xx, yy);
                        ++nv;
                    }
                }
            }
            const double mean = sum / n;
            double spread = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx;
                    const int yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                    spread += (gray(xx, yy) - mean) * (gray(xx, yy) - mean);
                }
            }
            const double gx = gray(std::min(x + 1, w - 1), y) - gray(std::max(x - 1, 0), y);
            const double gy = gray(x, std::min(y + 1, h - 1)) - gray(x, std::max(y - 1, 0));
            f.at(0, x, y) = gray(x, y);
            f.at(1, x, y) = spread / n * 10.0;
            f.at(2, x, y) = std::sqrt(gx * gx + gy * gy);
            // Pixels without any valid variance sample are treated as maximally uncertain.
            f.at(3, x, y) = nv > 0 ? std::log1p(var_sum / nv * inv_s2) : 10.0;
        }
    }
    return f;
}

void save_head(const HeadParams& params, const fs::path& bin_path) {
    std::string blob;
    auto put = [&blob](float v) {
        std::uint32_t raw = std::bit_cast<std::uint32_t>(v);
        if constexpr (std::endian::native == std::endian::big) {
            raw = ((raw & 0xFFu) << 24) | ((raw & 0xFF00u) << 8) | ((raw >> 8) & 0xFF00u) | (raw >> 24);
        }
        char bytes[4];
        std::memcpy(bytes, &raw, 4);
        blob.append(bytes, 4);
    };
    for (float v : params.w1) put(v);
    for (float v : params.b1) put(v);
    for (float v : params.w2) put(v);
    put(params.b2);

    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + bin_path.string() + "'");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    fs::path sidecar = bin_path;
    sidecar.replace_extension(".json");
    std::ofstream meta(sidecar, std::ios::trunc);
    if (!meta) throw IoError("cannot write '" + sidecar.string() + "'");
    meta << nlohmann::json{{"c_in", params.c_in}, {"hidden", kHeadHidden}, {"layout", "w1,b1,w2,b2"}}.dump(2)
         << "\n";
}

HeadParams load_head(const fs::path& bin_path) {
    fs::path sidecar = bin_path;
    sidecar.replace_extension(".json");
    std::ifstream meta(sidecar);
    if (!meta) throw IoError("cannot read head sidecar '" + sidecar.string() + "'");
    nlohmann::json doc;
    try {
        meta >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("head sidecar: ") + e.what());
    }
    if (doc.value("layout", std::string{}) != "w1,b1,w2,b2" || !doc.contains("c_in")) {
        throw ParseError("head sidecar: unexpected layout");
    }
    HeadParams params(doc.at("c_in").get<int>());

    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + bin_path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string blob = buf.str();
    const std::size_t expected = (params.w1.size() + params.b1.size() + params.w2.size() + 1) * 4;
    if (blob.size() != expected) {
        throw CorruptFileError("head weights: expected " + std::to_string(expected) + " bytes, found " +
                               std::to_string(blob.size()));
    }
    std::size_t offset = 0;
    auto get = [&]() {
        std::uint32_t raw = 0;
        std::memcpy(&raw, blob.data() + offset, 4);
        offset += 4;
        if constexpr (std::endian::native == std::endian::big) {
            raw = ((raw & 0xFFu) << 24) | ((raw & 0xFF00u) << 8) | ((raw >> 8) & 0xFF00u) | (raw >> 24);
        }
        return std::bit_cast<float>(raw);
    };
    for (auto& v : params.w1) v = get();
    for (auto& v : params.b1) v = get();
    for (auto& v : params.w2) v = get();
    params.b2 = get();
    return params;
}

}  // namespace confdepth
