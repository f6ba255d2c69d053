#pragma once

#include <filesystem>

#include "lightmover/image.hpp"

namespace lightmover {

// PFM ("PF", little-endian, negative scale header). Rows are stored
// bottom-to-top as the format requires; Image keeps top-to-bottom order.
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);

// 8-bit RGB PNG with value = round(255 * clamp(x, 0, 1)).
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

}  // namespace lightmover
