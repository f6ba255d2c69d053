#pragma once

#include <cstdint>

#include "lightmover/image.hpp"

namespace lightmover {

/// Exposure change in photographic stops (EV).
struct ExposureStops {
    double value = 0.0;
};

/// Multiplicative radiometric gain applied to a light's direct contribution.
struct IlluminationGain {
    double value = 1.0;
};

/// Linear-space RGB tint, each component in [0, 1].
struct Tint {
    Rgb rgb{1.0, 1.0, 1.0};

    static Tint white() { return {}; }
    void validate() const;
};

/// Ambient scaling factor in [0, 1].
struct AmbientScale {
    double value = 1.0;

    void validate() const;
};

inline constexpr double kMinOperatingStops = -3.0;
inline constexpr double kMaxOperatingStops = 3.0;

inline constexpr double kLumaR = 0.2126;
inline constexpr double kLumaG = 0.7152;
inline constexpr double kLumaB = 0.0722;

inline constexpr double kToneMapPercentile = 99.95;
inline constexpr int kToneMapSamples = 1024;
inline constexpr double kDisplayGamma = 2.2;

/// 2^stops. Throws DomainError on non-finite input.
IlluminationGain illumination_gain(ExposureStops stops);

/// amb + light, pixelwise.
LinearImage composite_linear(const LinearImage& amb, const DirectLightImage& light);

/// alpha * amb + gain * (light (x) tint), with the tint applied per channel.
LinearImage relight(const LinearImage& amb, const DirectLightImage& light, AmbientScale alpha,
                    IlluminationGain gain, const Tint& tint);

double luminance(const Rgb& rgb) noexcept;

/// Nearest-rank percentile of Rec.709 luminance.
///
/// Draws n_samples pixel positions uniformly with replacement from a
/// generator seeded with `seed`. When n_samples is at least the pixel count
/// every pixel is used exactly once instead, which makes the result the exact
/// percentile of the full image.
double luminance_percentile(const LinearImage& img, std::uint64_t seed,
                            double percentile = kToneMapPercentile,
                            int n_samples = kToneMapSamples);

/// Exhaustive nearest-rank percentile over all pixels.
double luminance_percentile_exhaustive(const LinearImage& img, double percentile);

/// clip(img / e_max, 0, 1)^(1/2.2). Throws DomainError when e_max <= 0.
ToneMappedImage tone_map(const LinearImage& img, double e_max);

/// Percentile normalization followed by tone mapping, the way every rendered
/// frame in the pipeline is brought to display range.
ToneMappedImage tone_map_auto(const LinearImage& img, std::uint64_t seed);

}  // namespace lightmover
