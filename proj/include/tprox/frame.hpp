#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tprox {

// One image, channel-major (c, y, x) storage.
struct Frame {
    int channels = 1;
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    Frame() = default;
    Frame(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t size() const { return pixels.size(); }

    double& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const Frame& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

inline void require_same_shape(const Frame& a, const Frame& b, const char* what) {
    if (!a.same_shape(b) || a.pixels.size() != b.pixels.size())
        throw std::invalid_argument(std::string(what) + ": frame shape mismatch");
}

} // namespace tprox
