#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace confdepth {

/// Dense single-channel field with a per-pixel validity mask.
///
/// Values are held in double precision in memory so that reductions and
/// gradients are not limited by storage rounding; on disk they are float32
/// (see map_io). Invalid pixels keep whatever value is stored but are ignored
/// by every reduction in the library.
class FloatMap {
public:
    FloatMap() = default;
    FloatMap(int width, int height, double fill = 0.0, bool valid = true);

    static FloatMap like(const FloatMap& other, double fill = 0.0);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool same_shape(const FloatMap& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    double& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
    double operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    bool valid(std::size_t i) const noexcept { return mask_[i] != 0; }
    bool valid(int x, int y) const noexcept { return mask_[index(x, y)] != 0; }
    void set_valid(std::size_t i, bool v) noexcept { mask_[i] = v ? 1 : 0; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<std::uint8_t> mask() noexcept { return mask_; }
    std::span<const std::uint8_t> mask() const noexcept { return mask_; }

    std::size_t count_valid() const noexcept;

    friend bool operator==(const FloatMap&, const FloatMap&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
    std::vector<std::uint8_t> mask_;
};

/// Interleaved 8-bit RGB image, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

    std::uint8_t& at(int x, int y, int c) noexcept {
        return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
                    static_cast<std::size_t>(c)];
    }
    std::uint8_t at(int x, int y, int c) const noexcept {
        return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
                    static_cast<std::size_t>(c)];
    }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Grayscale intensity in [0,1], (R+G+B)/3/255.
FloatMap grayscale(const RgbImage& image);

/// Multi-channel feature tensor stored channel-planar: data[c][y][x].
struct FeatureMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

    std::size_t plane() const noexcept { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    double& at(int c, int x, int y) noexcept {
        return data[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                    static_cast<std::size_t>(x)];
    }
    double at(int c, int x, int y) const noexcept {
        return data[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                    static_cast<std::size_t>(x)];
    }
};

}  // namespace confdepth
