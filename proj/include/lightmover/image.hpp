#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace lightmover {

using Rgb = std::array<double, 3>;

/// Interleaved H x W x 3 image of doubles, row-major, origin at the top-left.
///
/// Used both for linear radiance maps and for display-referred frames; the
/// wrappers below attach the meaning.
class Image {
public:
    Image() = default;
    Image(int width, int height, double fill = 0.0);
    Image(int width, int height, Rgb fill);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    bool empty() const noexcept { return pixel_count() == 0; }

    double& at(int x, int y, int c) noexcept { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const noexcept { return data_[index(x, y, c)]; }
    Rgb pixel(int x, int y) const noexcept;
    void set_pixel(int x, int y, const Rgb& v) noexcept;

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const Image& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Non-negative, finite linear-RGB radiance.
struct LinearImage {
    Image image;
};

/// Direct contribution of a single white, unit-intensity emitter.
struct DirectLightImage {
    Image image;
};

/// sRGB-gamma encoded frame with every value in [0, 1].
struct ToneMappedImage {
    Image image;
};

// Throws ShapeError unless both images have identical dimensions.
void require_same_shape(const Image& a, const Image& b, const char* what);

// Throws DomainError on negative or non-finite values.
void validate_linear(const Image& img);

}  // namespace lightmover
