#include "lightmover/radiometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lightmover/errors.hpp"

namespace lightmover {

void Tint::validate() const {
    for (double c : rgb) {
        if (!(c >= 0.0 && c <= 1.0)) throw DomainError("tint components must lie in [0, 1]");
    }
}

void AmbientScale::validate() const {
    if (!(value >= 0.0 && value <= 1.0)) throw DomainError("ambient scale must lie in [0, 1]");
}

IlluminationGain illumination_gain(ExposureStops stops) {
    if (!std::isfinite(stops.value)) throw DomainError("exposure stops must be finite");
    return {std::pow(2.0, stops.value)};
}

LinearImage composite_linear(const LinearImage& amb, const DirectLightImage& light) {
    require_same_shape(amb.image, light.image, "composite_linear");
    LinearImage out{amb.image};
    auto dst = out.image.values();
    auto src = light.image.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return out;
}

LinearImage relight(const LinearImage& amb, const DirectLightImage& light, AmbientScale alpha,
                    IlluminationGain gain, const Tint& tint) {
    require_same_shape(amb.image, light.image, "relight");
    LinearImage out{Image(amb.image.width(), amb.image.height())};
    auto dst = out.image.values();
    auto a = amb.image.values();
    auto l = light.image.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = alpha.value * a[i] + gain.value * (l[i] * tint.rgb[i % 3]);
    }
    return out;
}

double luminance(const Rgb& rgb) noexcept {
    return kLumaR * rgb[0] + kLumaG * rgb[1] + kLumaB * rgb[2];
}

namespace {

void check_percentile(double percentile) {
    if (!(percentile > 0.0 && percentile <= 100.0)) {
        throw DomainError("percentile must lie in (0, 100]");
    }
}

double nearest_rank(std::vector<double>& values, double percentile) {
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

}  // namespace

double luminance_percentile_exhaustive(const LinearImage& img, double percentile) {
    if (img.image.empty()) throw DomainError("luminance_percentile: empty image");
    check_percentile(percentile);
    std::vector<double> lum;
    lum.reserve(img.image.pixel_count());
    for (int y = 0; y < img.image.height(); ++y) {
        for (int x = 0; x < img.image.width(); ++x) lum.push_back(luminance(img.image.pixel(x, y)));
    }
    return nearest_rank(lum, percentile);
}

double luminance_percentile(const LinearImage& img, std::uint64_t seed, double percentile,
                            int n_samples) {
    if (img.image.empty()) throw DomainError("luminance_percentile: empty image");
    check_percentile(percentile);
    if (n_samples < 1) throw DomainError("luminance_percentile: n_samples must be >= 1");
    if (static_cast<std::size_t>(n_samples) >= img.image.pixel_count()) {
        return luminance_percentile_exhaustive(img, percentile);
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, img.image.pixel_count() - 1);
    std::vector<double> lum(static_cast<std::size_t>(n_samples));
    const auto w = static_cast<std::size_t>(img.image.width());
    for (auto& v : lum) {
        const std::size_t p = pick(rng);
        v = luminance(img.image.pixel(static_cast<int>(p % w), static_cast<int>(p / w)));
    }
    return nearest_rank(lum, percentile);
}

ToneMappedImage tone_map(const LinearImage& img, double e_max) {
    if (!(e_max > 0.0) || !std::isfinite(e_max)) throw DomainError("tone_map: e_max must be > 0");
    ToneMappedImage out{img.image};
    for (double& v : out.image.values()) {
        v = std::pow(std::clamp(v / e_max, 0.0, 1.0), 1.0 / kDisplayGamma);
    }
    return out;
}

ToneMappedImage tone_map_auto(const LinearImage& img, std::uint64_t seed) {
    double e_max = luminance_percentile(img, seed);
    // A black frame has no meaningful white point; any positive scale maps it to 0.
    if (!(e_max > 0.0)) e_max = 1.0;
    return tone_map(img, e_max);
}

}  // namespace lightmover
