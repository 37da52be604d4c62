#pragma once

#include <string>

#include "fido/errors.hpp"

namespace fido {

// Axis-aligned pixel box, half-open: x in [x_min, x_max), y in [y_min, y_max).
struct BoundingBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    long long area() const {
        return static_cast<long long>(x_max - x_min) * (y_max - y_min);
    }
};

inline void validate_box(const BoundingBox& b, int width, int height, const std::string& context) {
    if (b.x_min >= b.x_max || b.y_min >= b.y_max)
        throw ConfigError(context + ": degenerate box (" + std::to_string(b.x_min) + "," +
                          std::to_string(b.y_min) + "," + std::to_string(b.x_max) + "," +
                          std::to_string(b.y_max) + ")");
    if (b.x_min < 0 || b.y_min < 0 || b.x_max > width || b.y_max > height)
        throw ConfigError(context + ": box exceeds image bounds " + std::to_string(width) + "x" +
                          std::to_string(height));
}

}  // namespace fido
