#pragma once

#include <stdexcept>
#include <string>

namespace fido {

// Bad shapes, invalid arguments, malformed files, unusable configs.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape incompatibilities inside the numeric core.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaping a public numeric operation, degenerate normalizations.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fido
