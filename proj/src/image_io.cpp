#include "lightmover/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lightmover/errors.hpp"

namespace lightmover {

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "PF\n" << img.width() << ' ' << img.height() << "\n-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(img.width()) * 3);
    for (int y = img.height() - 1; y >= 0; --y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = static_cast<float>(img.at(x, y, c));
                if constexpr (std::endian::native == std::endian::big) {
                    std::uint32_t bits;
                    std::memcpy(&bits, &v, 4);
                    bits = byteswap32(bits);
                    std::memcpy(&v, &bits, 4);
                }
                row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)] = v;
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string magic;
    int width = 0;
    int height = 0;
    double scale = 0.0;
    in >> magic >> width >> height >> scale;
    in.get();  // single whitespace byte before the raster
    if (!in || magic != "PF" || width <= 0 || height <= 0 || scale == 0.0) {
        throw IoError("not an RGB PFM file: " + path.string());
    }
    const bool file_little = scale < 0.0;
    const bool swap = file_little != (std::endian::native == std::endian::little);
    Image img(width, height);
    std::vector<float> row(static_cast<std::size_t>(width) * 3);
    for (int y = height - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw IoError("truncated PFM raster: " + path.string());
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)];
                if (swap) {
                    std::uint32_t bits;
                    std::memcpy(&bits, &v, 4);
                    bits = byteswap32(bits);
                    std::memcpy(&v, &bits, 4);
                }
                img.at(x, y, c) = static_cast<double>(v);
            }
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> buffer(img.pixel_count() * 3);
    auto values = img.values();
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        buffer[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(values[i], 0.0, 1.0)));
    }
    png_image meta;
    std::memset(&meta, 0, sizeof(meta));
    meta.version = PNG_IMAGE_VERSION;
    meta.width = static_cast<png_uint_32>(img.width());
    meta.height = static_cast<png_uint_32>(img.height());
    meta.format = PNG_FORMAT_RGB;
    const std::string file = path.string();
    if (png_image_write_to_file(&meta, file.c_str(), 0, buffer.data(), 0, nullptr) == 0) {
        std::string msg = meta.message;
        png_image_free(&meta);
        throw IoError("cannot write PNG " + file + ": " + msg);
    }
}

Image read_png(const std::filesystem::path& path) {
    png_image meta;
    std::memset(&meta, 0, sizeof(meta));
    meta.version = PNG_IMAGE_VERSION;
    const std::string file = path.string();
    if (png_image_begin_read_from_file(&meta, file.c_str()) == 0) {
        throw IoError("cannot read PNG " + file + ": " + meta.message);
    }
    meta.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(meta));
    if (png_image_finish_read(&meta, nullptr, buffer.data(), 0, nullptr) == 0) {
        std::string msg = meta.message;
        png_image_free(&meta);
        throw IoError("cannot decode PNG " + file + ": " + msg);
    }
    Image img(static_cast<int>(meta.width), static_cast<int>(meta.height));
    auto values = img.values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = buffer[i] / 255.0;
    return img;
}

}  // namespace lightmover
