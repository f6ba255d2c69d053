#pragma once

namespace lightmover {

/// Axis-aligned box in normalized image coordinates: x to the right, y down,
/// the unit square covering the whole frame.
struct BoundingBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 1.0;
    double y1 = 1.0;

    double width() const noexcept { return x1 - x0; }
    double height() const noexcept { return y1 - y0; }
    double area() const noexcept { return width() * height(); }
    double center_x() const noexcept { return 0.5 * (x0 + x1); }
    double center_y() const noexcept { return 0.5 * (y0 + y1); }

    /// Contained in the unit square with positive area.
    bool valid() const noexcept {
        return x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0 && x0 < x1 && y0 < y1;
    }
    void validate() const;

    static BoundingBox full() { return {}; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

BoundingBox clamp_to_unit(const BoundingBox& box) noexcept;

}  // namespace lightmover
