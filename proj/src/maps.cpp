#include "confdepth/maps.hpp"

#include <algorithm>

namespace confdepth {

FloatMap::FloatMap(int width, int height, double fill, bool valid)
    : width_(width), height_(height),
      data_(static_cast<std::size_t>(std::max(width, 0)) * static_cast<std::size_t>(std::max(height, 0)), fill),
      mask_(data_.size(), valid ? 1 : 0) {}

FloatMap FloatMap::like(const FloatMap& other, double fill) {
    FloatMap out(other.width_, other.height_, fill);
    out.mask_ = other.mask_;
    return out;
}

std::size_t FloatMap::count_valid() const noexcept {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

FloatMap grayscale(const RgbImage& image) {
    FloatMap gray(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const double sum = static_cast<double>(image.at(x, y, 0)) + image.at(x, y, 1) + image.at(x, y, 2);
            gray(x, y) = sum / 3.0 / 255.0;
        }
    }
    return gray;
}

}  // namespace confdepth
