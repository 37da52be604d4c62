#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fido {

// Thin libpng wrappers. Images are 8-bit, row-major, top-left origin.
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 (gray) or 3 (rgb)
    std::vector<uint8_t> pixels;  // height * width * channels
};

void write_png(const std::string& path, const PngImage& img);
PngImage read_png(const std::string& path);

}  // namespace fido
