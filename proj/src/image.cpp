#include "lightmover/image.hpp"

#include <cmath>
#include <string>

#include "lightmover/errors.hpp"

namespace lightmover {

Image::Image(int width, int height, double fill)
    : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ShapeError("image dimensions must be non-negative");
    data_.assign(pixel_count() * 3, fill);
}

Image::Image(int width, int height, Rgb fill) : Image(width, height, 0.0) {
    for (std::size_t i = 0; i < pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) data_[i * 3 + static_cast<std::size_t>(c)] = fill[c];
    }
}

Rgb Image::pixel(int x, int y) const noexcept {
    return {at(x, y, 0), at(x, y, 1), at(x, y, 2)};
}

void Image::set_pixel(int x, int y, const Rgb& v) noexcept {
    for (int c = 0; c < 3; ++c) at(x, y, c) = v[c];
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) +
                         "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                         "x" + std::to_string(b.height()) + ")");
    }
}

void validate_linear(const Image& img) {
    for (double v : img.values()) {
        if (!std::isfinite(v) || v < 0.0) {
            throw DomainError("linear image values must be finite and non-negative");
        }
    }
}

}  // namespace lightmover
