#include "lightmover/control_frames.hpp"

#include <algorithm>
#include <cmath>

#include "lightmover/errors.hpp"
#include "lightmover/random.hpp"

namespace lightmover {

namespace {

void check_resolution(Resolution res) {
    if (res.width <= 0 || res.height <= 0) throw ShapeError("control frame resolution must be positive");
}

}  // namespace

std::pair<int, int> rasterize_span(double lo, double hi, int pixels) {
    // center (i + 0.5) / n in [lo, hi]  <=>  i in [lo * n - 0.5, hi * n - 0.5]
    const double n = pixels;
    int begin = static_cast<int>(std::ceil(lo * n - 0.5));
    int end = static_cast<int>(std::floor(hi * n - 0.5)) + 1;
    begin = std::clamp(begin, 0, pixels);
    end = std::clamp(end, begin, pixels);
    return {begin, end};
}

MovementMap encode_movement_map(const BoundingBox& src, const BoundingBox& tgt, Resolution res) {
    check_resolution(res);
    src.validate();
    tgt.validate();
    const auto [sx0, sx1] = rasterize_span(src.x0, src.x1, res.width);
    const auto [sy0, sy1] = rasterize_span(src.y0, src.y1, res.height);
    const auto [tx0, tx1] = rasterize_span(tgt.x0, tgt.x1, res.width);
    const auto [ty0, ty1] = rasterize_span(tgt.y0, tgt.y1, res.height);
    if (sx0 == sx1 || sy0 == sy1) throw DegenerateInputError("source box covers no pixel centers");
    if (tx0 == tx1 || ty0 == ty1) throw DegenerateInputError("target box covers no pixel centers");

    MovementMap map{Image(res.width, res.height)};
    for (int y = sy0; y < sy1; ++y) {
        for (int x = sx0; x < sx1; ++x) map.image.at(x, y, 0) = 1.0;
    }
    for (int y = ty0; y < ty1; ++y) {
        for (int x = tx0; x < tx1; ++x) {
            map.image.at(x, y, 1) = 1.0;
            map.image.at(x, y, 2) = 1.0;
        }
    }
    return map;
}

ColorControlFrame encode_color_frame(const Tint& tint, Resolution res) {
    check_resolution(res);
    tint.validate();
    return {Image(res.width, res.height, tint.rgb)};
}

double encode_intensity_value(ExposureStops stops) {
    if (!std::isfinite(stops.value)) throw DomainError("exposure stops must be finite");
    return std::clamp((stops.value - kMinOperatingStops) / (kMaxOperatingStops - kMinOperatingStops), 0.0, 1.0);
}

ExposureStops decode_intensity_value(double gray) {
    return {kMinOperatingStops + gray * (kMaxOperatingStops - kMinOperatingStops)};
}

IntensityControlFrame encode_intensity_frame(ExposureStops stops, Resolution res) {
    check_resolution(res);
    return {Image(res.width, res.height, encode_intensity_value(stops))};
}

Image resize_bilinear(const Image& src, Resolution res) {
    check_resolution(res);
    if (src.empty()) throw DegenerateInputError("cannot resize an empty image");
    Image out(res.width, res.height);
    const double sx = static_cast<double>(src.width()) / res.width;
    const double sy = static_cast<double>(src.height()) / res.height;
    for (int y = 0; y < res.height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < res.width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = src.at(x0, y0, c) + wx * (src.at(x1, y0, c) - src.at(x0, y0, c));
                const double bottom = src.at(x0, y1, c) + wx * (src.at(x1, y1, c) - src.at(x0, y1, c));
                out.at(x, y, c) = top + wy * (bottom - top);
            }
        }
    }
    return out;
}

ObjectFrame crop_object_frame(const ToneMappedImage& reference, const BoundingBox& box, Resolution res) {
    box.validate();
    const Image& img = reference.image;
    const auto [x0, x1] = rasterize_span(box.x0, box.x1, img.width());
    const auto [y0, y1] = rasterize_span(box.y0, box.y1, img.height());
    if (x0 == x1 || y0 == y1) throw DegenerateInputError("object crop covers no pixels");
    Image crop(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) crop.set_pixel(x - x0, y - y0, img.pixel(x, y));
    }
    return {resize_bilinear(crop, res)};
}

BoundingBox augment_box(const BoundingBox& box, std::uint64_t seed, double scale_lo, double scale_hi) {
    box.validate();
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw ConfigError("augment_box: invalid scale range");
    Rng rng(derive_seed({seed, 0xB0Bull}));
    const double sw = uniform(rng, scale_lo, scale_hi);
    const double sh = uniform(rng, scale_lo, scale_hi);
    // Each edge moves by the same amount in opposite directions, so the center stays put.
    const double dx = 0.5 * (1.0 - sw) * box.width();
    const double dy = 0.5 * (1.0 - sh) * box.height();
    const BoundingBox scaled{box.x0 + dx, box.y0 + dy, box.x1 - dx, box.y1 - dy};
    return clamp_to_unit(scaled);
}

}  // namespace lightmover
