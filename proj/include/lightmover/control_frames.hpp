#pragma once

#include <cstdint>
#include <utility>

#include "lightmover/bounding_box.hpp"
#include "lightmover/image.hpp"
#include "lightmover/radiometry.hpp"

namespace lightmover {

struct Resolution {
    int width = 0;
    int height = 0;
};

/// R = source mask, G = B = target mask, all values in {0, 1}.
struct MovementMap {
    Image image;
};

struct ColorControlFrame {
    Image image;
};

struct IntensityControlFrame {
    Image image;
};

struct ObjectFrame {
    Image image;
};

/// Half-open pixel span [begin, end) whose pixel centers fall inside [lo, hi].
std::pair<int, int> rasterize_span(double lo, double hi, int pixels);

/// A pixel belongs to a box iff its center lies inside the closed box.
MovementMap encode_movement_map(const BoundingBox& src, const BoundingBox& tgt, Resolution res);

ColorControlFrame encode_color_frame(const Tint& tint, Resolution res);

/// Gray level (stops + 3) / 6, clamped to [0, 1].
double encode_intensity_value(ExposureStops stops);
ExposureStops decode_intensity_value(double gray);
IntensityControlFrame encode_intensity_frame(ExposureStops stops, Resolution res);

/// Nearest-pixel crop of the box followed by a bilinear resize.
ObjectFrame crop_object_frame(const ToneMappedImage& reference, const BoundingBox& box, Resolution res);

/// Bilinear resize with pixel-center alignment and edge clamping.
Image resize_bilinear(const Image& src, Resolution res);

/// Rescales width and height independently by draws from [lo, hi], keeping
/// the center, then clamps to the unit square.
BoundingBox augment_box(const BoundingBox& box, std::uint64_t seed, double scale_lo = 0.8,
                        double scale_hi = 1.2);

}  // namespace lightmover
