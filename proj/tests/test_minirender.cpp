#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "lightmover/errors.hpp"
#include "lightmover/minirender.hpp"

using namespace lightmover;

namespace {

// Floor at y = 0 with one sphere hovering over it and a light straight above.
Scene shadow_scene() {
    Scene s;
    s.planes.push_back({Vec3(0, 0, 0), Vec3(0, 1, 0), {0.6, 0.5, 0.4}});
    s.spheres.push_back({Vec3(0.0, 0.6, 1.0), 0.3, {0.7, 0.7, 0.7}});
    s.lights.push_back({Vec3(0.0, 2.0, 1.0)});
    s.camera.width = 48;
    s.camera.height = 48;
    s.ambient_level = 0.05;
    return s;
}

// Closed-form ray-sphere test on the open segment a -> b.
bool segment_hits_sphere(const Vec3& a, const Vec3& b, const Vec3& c, double r) {
    const Vec3 d = b - a;
    const double A = d.dot(d);
    const double B = 2.0 * d.dot(a - c);
    const double C = (a - c).dot(a - c) - r * r;
    const double disc = B * B - 4 * A * C;
    if (disc < 0) return false;
    const double t1 = (-B - std::sqrt(disc)) / (2 * A);
    const double t2 = (-B + std::sqrt(disc)) / (2 * A);
    return (t1 > 1e-9 && t1 < 1.0) || (t2 > 1e-9 && t2 < 1.0);
}

}  // namespace

TEST_CASE("scene sampling is deterministic and seeds give distinct scenes") {
    SceneConfig cfg;
    const Scene a = sample_scene(7, cfg);
    const Scene b = sample_scene(7, cfg);
    REQUIRE(a.lights.size() == b.lights.size());
    CHECK(a.lights[0].position == b.lights[0].position);
    CHECK(a.spheres.size() == b.spheres.size());
    CHECK(a.ambient_level == b.ambient_level);

    std::vector<Vec3> positions;
    for (std::uint64_t seed = 0; seed < 20; ++seed) positions.push_back(sample_scene(seed, cfg).lights[0].position);
    for (std::size_t i = 0; i < positions.size(); ++i)
        for (std::size_t j = i + 1; j < positions.size(); ++j) CHECK(positions[i] != positions[j]);

    SceneConfig none = cfg;
    none.min_spheres = 0;
    none.max_spheres = 0;
    CHECK_THROWS_AS(sample_scene(1, none), ConfigError);
    SceneConfig empty = cfg;
    empty.light_x = {1.0, -1.0};
    CHECK_THROWS_AS(sample_scene(1, empty), ConfigError);
}

TEST_CASE("ambient pass with zero ambient is background only") {
    Scene s = shadow_scene();
    s.ambient_level = 0.0;
    const auto amb = render_ambient(s);
    for (int y = 0; y < amb.image.height(); ++y)
        for (int x = 0; x < amb.image.width(); ++x) {
            const bool hit = trace(s, camera_ray(s.camera, x + 0.5, y + 0.5)).has_value();
            for (int c = 0; c < 3; ++c) CHECK(amb.image.at(x, y, c) == (hit ? 0.0 : kBackgroundLevel));
        }
}

TEST_CASE("shadowed and lit floor pixels against closed-form oracles") {
    const Scene s = shadow_scene();
    const auto light = render_direct(s, 0);
    const Vec3 lp = s.lights[0].position;
    int shadowed = 0, lit = 0;
    for (int y = 0; y < s.camera.height; ++y) {
        for (int x = 0; x < s.camera.width; ++x) {
            const Ray ray = camera_ray(s.camera, x + 0.5, y + 0.5);
            if (ray.direction.y() >= 0) continue;
            const double t_floor = -ray.origin.y() / ray.direction.y();
            const Vec3 p = ray.origin + t_floor * ray.direction;
            // Skip pixels where the sphere or the emitter proxy is in front of the floor.
            if (segment_hits_sphere(ray.origin, p, s.spheres[0].center, s.spheres[0].radius)) continue;
            if (segment_hits_sphere(ray.origin, p, lp, s.proxy_radius)) continue;
            if (segment_hits_sphere(p, lp, s.spheres[0].center, s.spheres[0].radius)) {
                ++shadowed;
                for (int c = 0; c < 3; ++c) CHECK(light.image.at(x, y, c) == 0.0);
            } else {
                ++lit;
                const Vec3 l = lp - p;
                const double d = l.norm();
                const double cosn = std::max(0.0, l.y() / d);
                const Rgb alb = s.planes[0].albedo;
                for (int c = 0; c < 3; ++c) {
                    const double expect = alb[c] * cosn / (std::numbers::pi * d * d);
                    CHECK(std::abs(light.image.at(x, y, c) - expect) < 1e-12);
                }
            }
        }
    }
    CHECK(shadowed > 0);
    CHECK(lit > 0);

    // The point straight under the sphere.
    CHECK(direct_radiance_factor(s, Vec3(0, 0, 1), Vec3(0, 1, 0), lp) == 0.0);
}

TEST_CASE("direct term falls with emitter distance") {
    Scene s = shadow_scene();
    s.spheres.clear();
    s.spheres.push_back({Vec3(5, 0.3, 5), 0.3, {0.5, 0.5, 0.5}});
    const Vec3 p(0, 0, 0), n(0, 1, 0);
    double prev = INFINITY;
    for (int k = 0; k < 12; ++k) {
        const double h = 0.5 + 0.3 * k;
        const double v = direct_radiance_factor(s, p, n, Vec3(0, h, 0));
        CHECK(v < prev);
        CHECK(v == doctest::Approx(1.0 / (std::numbers::pi * h * h)).epsilon(1e-12));
        prev = v;
    }
}

TEST_CASE("two-light superposition") {
    Scene s = shadow_scene();
    s.lights.push_back({Vec3(1.0, 1.2, 0.2)});
    const auto both = render_direct_all(s);
    const auto l0 = render_direct(s, 0);
    const auto l1 = render_direct(s, 1);
    double worst = 0.0;
    const auto b = both.image.values();
    const auto a0 = l0.image.values();
    const auto a1 = l1.image.values();
    for (std::size_t i = 0; i < b.size(); ++i) worst = std::max(worst, std::abs(b[i] - (a0[i] + a1[i])));
    CHECK(worst < 1e-6);
}

TEST_CASE("ambient pass ignores the emitter and renders are deterministic") {
    Scene s = shadow_scene();
    const auto first = render_disentangled(s, 0);
    const auto again = render_disentangled(s, 0);
    CHECK(first.amb.image == again.amb.image);
    CHECK(first.light.image == again.light.image);
    s.lights[0].position = Vec3(-1.0, 1.5, 0.3);
    CHECK(render_ambient(s).image == first.amb.image);
    CHECK_THROWS_AS(render_disentangled(s, 1), IndexError);
    CHECK_THROWS_AS(render_disentangled(s, -1), IndexError);
}

TEST_CASE("movement pairs") {
    const Scene s = sample_scene(3, SceneConfig{});
    const Vec3 start = s.lights[0].position;
    const Trajectory tr{start, start + Vec3(0.6, 0.0, 0.2)};
    const auto pair = generate_movement_pair(s, 0, tr, 0.0, 1.0);
    CHECK(pair.frame_a.amb.image == pair.frame_b.amb.image);
    CHECK(pair.frame_a.light.image != pair.frame_b.light.image);
    CHECK(pair.src_box.valid());
    CHECK(pair.tgt_box.valid());
    CHECK_THROWS_AS(generate_movement_pair(s, 0, tr, 0.5, 0.5), ContractError);
    CHECK_THROWS_AS(generate_movement_pair(s, 0, tr, 0.0, 1.5), ContractError);

    const Vec3 back = s.camera.position - 2.0 * (s.camera.look_at - s.camera.position).normalized();
    const Trajectory behind{back, back + Vec3(0.1, 0, 0)};
    CHECK_THROWS_AS(generate_movement_pair(s, 0, behind, 0.0, 1.0), RetriableSampleError);
}

TEST_CASE("trajectory along the view axis keeps the box center") {
    Scene s = shadow_scene();
    s.camera.look_at = Vec3(0.0, 0.6, 1.0);
    const Vec3 fwd = (s.camera.look_at - s.camera.position).normalized();
    const Trajectory tr{s.camera.position + 2.0 * fwd, s.camera.position + 4.0 * fwd};
    const auto pair = generate_movement_pair(s, 0, tr, 0.0, 1.0);
    CHECK(pair.src_box.center_x() == doctest::Approx(pair.tgt_box.center_x()).epsilon(1e-12));
    CHECK(pair.src_box.center_y() == doctest::Approx(pair.tgt_box.center_y()).epsilon(1e-12));
    CHECK(pair.src_box.width() > pair.tgt_box.width());
    CHECK(pair.src_box.height() > pair.tgt_box.height());
}
