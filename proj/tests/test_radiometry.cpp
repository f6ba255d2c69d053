#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "lightmover/errors.hpp"
#include "lightmover/radiometry.hpp"

using namespace lightmover;

namespace {

std::int64_t ulp_distance(double a, double b) {
    const auto ia = std::bit_cast<std::int64_t>(a);
    const auto ib = std::bit_cast<std::int64_t>(b);
    return ia > ib ? ia - ib : ib - ia;
}

LinearImage constant(int w, int h, Rgb v) { return {Image(w, h, v)}; }

LinearImage random_linear(int w, int h, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 3.0);
    LinearImage img{Image(w, h)};
    for (double& v : img.image.values()) v = u(rng);
    return img;
}

}  // namespace

TEST_CASE("illumination gain at whole stops is exact") {
    CHECK(illumination_gain({1.0}).value == 2.0);
    CHECK(illumination_gain({-1.0}).value == 0.5);
    CHECK(illumination_gain({0.0}).value == 1.0);
    CHECK(illumination_gain({3.0}).value == 8.0);
    CHECK_THROWS_AS(illumination_gain({std::nan("")}), DomainError);
    CHECK_THROWS_AS(illumination_gain({INFINITY}), DomainError);
}

TEST_CASE("illumination gain is multiplicative within 2 ulp") {
    std::mt19937_64 rng(11);
    // Stops on a 2^-20 grid keep a + b exact, so only the gain evaluation is measured.
    std::uniform_int_distribution<int> u(-3 << 20, 3 << 20);
    std::int64_t worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const double a = std::ldexp(u(rng), -20), b = std::ldexp(u(rng), -20);
        const double lhs = illumination_gain({a + b}).value;
        const double rhs = illumination_gain({a}).value * illumination_gain({b}).value;
        worst = std::max(worst, ulp_distance(lhs, rhs));
    }
    CHECK(worst <= 2);
}

TEST_CASE("composite and relight examples") {
    const auto amb = constant(3, 2, {0.2, 0.2, 0.2});
    const DirectLightImage light{Image(3, 2, 0.3)};
    const auto sum = composite_linear(amb, light);
    for (double v : sum.image.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

    const DirectLightImage dark{Image(3, 2, 0.0)};
    CHECK(composite_linear(amb, dark).image == amb.image);

    const auto a = constant(2, 2, {0.1, 0.1, 0.1});
    const DirectLightImage l{Image(2, 2, 0.4)};
    const auto r = relight(a, l, {0.5}, {2.0}, Tint{{1.0, 0.5, 0.25}});
    const Rgb expect{0.85, 0.45, 0.25};
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 3; ++c) CHECK(std::abs(r.image.at(x, y, c) - expect[c]) < 1e-12);

    const auto off = relight(a, l, {0.5}, {0.0}, Tint::white());
    for (double v : off.image.values()) CHECK(v == 0.5 * 0.1);

    CHECK_THROWS_AS(composite_linear(amb, DirectLightImage{Image(2, 2)}), ShapeError);
    CHECK_THROWS_AS(relight(amb, DirectLightImage{Image(2, 2)}, {1.0}, {1.0}, Tint::white()), ShapeError);
}

TEST_CASE("relight identities on rendered pairs") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const auto r = render_sample([] {
            DatasetConfig c;
            c.width = 16;
            c.height = 16;
            return c;
        }(), 3, i, TaskType::light_move);
        const auto& amb = r.frame_a.amb;
        const auto& light = r.frame_a.light;
        CHECK(relight(amb, light, {1.0}, {1.0}, Tint::white()).image == composite_linear(amb, light).image);

        const AmbientScale alpha{u(rng)};
        const Tint tint{{u(rng), u(rng), u(rng)}};
        const double g1 = 4.0 * u(rng), g2 = 4.0 * u(rng);
        const auto sum = relight(amb, light, alpha, {g1 + g2}, tint);
        const auto p1 = relight(amb, light, alpha, {g1}, tint);
        const auto p2 = relight(amb, light, alpha, {g2}, tint);
        double err = 0.0;
        const auto s = sum.image.values();
        const auto a1 = p1.image.values();
        const auto a2 = p2.image.values();
        const auto am = amb.image.values();
        for (std::size_t k = 0; k < s.size(); ++k) err = std::max(err, std::abs(s[k] - (a1[k] + a2[k] - alpha.value * am[k])));
        CHECK(err < 1e-6);

        // A zero tint channel removes that channel's direct light entirely.
        Tint zero = tint;
        zero.rgb[i % 3] = 0.0;
        const auto t = relight(amb, light, alpha, {g1}, zero);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) CHECK(t.image.at(x, y, i % 3) == alpha.value * amb.image.at(x, y, i % 3));
    }
}

TEST_CASE("percentile of a constant image and exhaustive fallback") {
    const auto img = constant(40, 40, {0.5, 0.5, 0.5});
    const double wsum = kLumaR + kLumaG + kLumaB;
    CHECK(luminance_percentile(img, 1) == doctest::Approx(0.5 * wsum).epsilon(1e-15));
    CHECK(luminance_percentile(img, 99) == doctest::Approx(0.5 * wsum).epsilon(1e-15));

    std::mt19937_64 rng(8);
    const auto small = random_linear(20, 20, rng);
    std::vector<double> lum;
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            const Rgb p = small.image.pixel(x, y);
            lum.push_back(0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]);
        }
    std::sort(lum.begin(), lum.end());
    for (double pct : {50.0, 90.0, 99.95, 100.0}) {
        const auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * 400.0));
        CHECK(luminance_percentile(small, 3, pct) == lum[rank - 1]);
        CHECK(luminance_percentile_exhaustive(small, pct) == lum[rank - 1]);
    }

    const auto big = random_linear(64, 64, rng);
    CHECK(luminance_percentile(big, 42) == luminance_percentile(big, 42));
    CHECK_THROWS_AS(luminance_percentile(LinearImage{}, 1), DomainError);
    CHECK_THROWS_AS(luminance_percentile(big, 1, 0.0), DomainError);
}

TEST_CASE("tone map anchors, clipping and gamma value") {
    const double e = 2.0;
    LinearImage img{Image(3, 1)};
    img.image.set_pixel(0, 0, {e, e, e});
    img.image.set_pixel(1, 0, {0.25 * e, 0.25 * e, 0.25 * e});
    img.image.set_pixel(2, 0, {4 * e, 0.0, 4 * e});
    const auto tm = tone_map(img, e);
    CHECK(tm.image.at(0, 0, 0) == 1.0);
    const double oracle = static_cast<double>(std::pow(0.25L, 1.0L / 2.2L));
    CHECK(std::abs(tm.image.at(1, 0, 1) - oracle) < 1e-12);
    CHECK(std::abs(tm.image.at(1, 0, 1) - 0.5325) < 1e-4);
    CHECK(tm.image.at(2, 0, 0) == 1.0);
    CHECK(tm.image.at(2, 0, 1) == 0.0);
    CHECK_THROWS_AS(tone_map(img, 0.0), DomainError);
    CHECK_THROWS_AS(tone_map(img, -1.0), DomainError);
}

TEST_CASE("tone map is monotone and bounded") {
    LinearImage ramp{Image(200, 1)};
    for (int x = 0; x < 200; ++x) ramp.image.set_pixel(x, 0, {x * 0.01, x * 0.02, x * 0.005});
    const auto tm = tone_map(ramp, 1.0);
    for (int c = 0; c < 3; ++c) {
        for (int x = 1; x < 200; ++x) CHECK(tm.image.at(x, 0, c) >= tm.image.at(x - 1, 0, c));
    }
    for (double v : tm.image.values()) CHECK((v >= 0.0 && v <= 1.0));
}
