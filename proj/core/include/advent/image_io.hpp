#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace advent::image_io {

/// 8-bit image, interleaved channels, row-major.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;
};

/// Throws IoError on any decode failure.
Image8 read_png(const std::filesystem::path& path);

/// Throws IoError on any encode failure.
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace advent::image_io
