#include "lightmover/minirender.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lightmover/errors.hpp"
#include "lightmover/random.hpp"

namespace lightmover {

namespace {

constexpr double kShadowEpsilon = 1e-6;

void check_range(const Range& r, const char* name) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
        throw ConfigError(std::string("scene config: empty range for ") + name);
    }
}

struct CameraBasis {
    Vec3 forward;
    Vec3 right;
    Vec3 up;
    double tan_half;
    double aspect;
};

CameraBasis basis(const Camera& cam) {
    CameraBasis b;
    b.forward = (cam.look_at - cam.position).normalized();
    b.right = b.forward.cross(cam.up).normalized();
    b.up = b.right.cross(b.forward);
    b.tan_half = std::tan(0.5 * cam.vfov_degrees * std::numbers::pi / 180.0);
    b.aspect = static_cast<double>(cam.width) / static_cast<double>(cam.height);
    return b;
}

Image new_frame(const Scene& scene, double fill) {
    return Image(scene.camera.width, scene.camera.height, fill);
}

double light_pixel(const Scene& scene, const Ray& ray, const std::optional<Hit>& hit,
                   const Vec3& light_pos, const Rgb& albedo_or_zero, int channel) {
    double value = 0.0;
    if (hit) {
        value = albedo_or_zero[channel] *
                direct_radiance_factor(scene, hit->point, hit->normal, light_pos);
    }
    const Sphere proxy{light_pos, scene.proxy_radius, {}};
    if (auto t = intersect(ray, proxy); t && (!hit || *t < hit->t)) {
        value += scene.proxy_radiance * PointLight::kEmission[channel];
    }
    return value;
}

void check_light_index(const Scene& scene, int light_index) {
    if (light_index < 0 || light_index >= static_cast<int>(scene.lights.size())) {
        throw IndexError("light index " + std::to_string(light_index) + " out of range (" +
                         std::to_string(scene.lights.size()) + " lights)");
    }
}

}  // namespace

void BoundingBox::validate() const {
    if (!valid()) throw DegenerateInputError("bounding box must be inside the unit square with positive area");
}

BoundingBox clamp_to_unit(const BoundingBox& box) noexcept {
    return {std::clamp(box.x0, 0.0, 1.0), std::clamp(box.y0, 0.0, 1.0), std::clamp(box.x1, 0.0, 1.0),
            std::clamp(box.y1, 0.0, 1.0)};
}

void Scene::validate() const {
    if (spheres.empty() && planes.empty()) throw ConfigError("scene needs at least one object");
    if (lights.empty()) throw ConfigError("scene needs at least one light");
    for (const auto& s : spheres) {
        if (!(s.radius > 0.0)) throw ConfigError("sphere radius must be positive");
    }
    if (!(camera.vfov_degrees > 0.0 && camera.vfov_degrees < 180.0)) {
        throw ConfigError("camera field of view must lie in (0, 180) degrees");
    }
    if (camera.width <= 0 || camera.height <= 0) throw ConfigError("camera image size must be positive");
    if (!(ambient_level >= 0.0)) throw ConfigError("ambient level must be non-negative");
}

void SceneConfig::validate() const {
    if (min_spheres < 1) throw ConfigError("scene config: min_spheres must be >= 1");
    if (min_spheres > max_spheres) throw ConfigError("scene config: empty sphere count range");
    if (min_lights < 1 || min_lights > max_lights) throw ConfigError("scene config: invalid light count range");
    check_range(sphere_radius, "sphere_radius");
    check_range(sphere_x, "sphere_x");
    check_range(sphere_z, "sphere_z");
    check_range(albedo, "albedo");
    check_range(light_x, "light_x");
    check_range(light_y, "light_y");
    check_range(light_z, "light_z");
    check_range(ambient_level, "ambient_level");
    if (!(sphere_radius.lo > 0.0)) throw ConfigError("scene config: sphere radius must be positive");
    if (albedo.lo < 0.0 || albedo.hi > 1.0) throw ConfigError("scene config: albedo must lie in [0, 1]");
    if (ambient_level.lo < 0.0) throw ConfigError("scene config: ambient level must be non-negative");
    if (!(camera.vfov_degrees > 0.0 && camera.vfov_degrees < 180.0)) {
        throw ConfigError("scene config: camera field of view must lie in (0, 180) degrees");
    }
    if (camera.width <= 0 || camera.height <= 0) throw ConfigError("scene config: image size must be positive");
}

Scene sample_scene(std::uint64_t seed, const SceneConfig& config) {
    config.validate();
    Rng rng(derive_seed({seed, 0x5CE7Eull}));
    Scene scene;
    scene.camera = config.camera;
    scene.ambient_level = uniform(rng, config.ambient_level.lo, config.ambient_level.hi);

    auto random_albedo = [&] {
        return Rgb{uniform(rng, config.albedo.lo, config.albedo.hi),
                   uniform(rng, config.albedo.lo, config.albedo.hi),
                   uniform(rng, config.albedo.lo, config.albedo.hi)};
    };

    scene.planes.push_back({Vec3(0.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0), random_albedo()});
    if (config.back_wall) {
        scene.planes.push_back({Vec3(0.0, 0.0, config.wall_z), Vec3(0.0, 0.0, -1.0), random_albedo()});
    }

    const int n_spheres = uniform_int(rng, config.min_spheres, config.max_spheres);
    for (int i = 0; i < n_spheres; ++i) {
        // Rejection sampling against overlap; a crowded draw keeps the last candidate.
        Sphere s;
        for (int attempt = 0; attempt < 64; ++attempt) {
            s.radius = uniform(rng, config.sphere_radius.lo, config.sphere_radius.hi);
            s.center = Vec3(uniform(rng, config.sphere_x.lo, config.sphere_x.hi), s.radius,
                            uniform(rng, config.sphere_z.lo, config.sphere_z.hi));
            const bool overlaps = std::any_of(scene.spheres.begin(), scene.spheres.end(), [&](const Sphere& o) {
                return (o.center - s.center).norm() < o.radius + s.radius + 0.05;
            });
            if (!overlaps) break;
        }
        s.albedo = random_albedo();
        scene.spheres.push_back(s);
    }

    const int n_lights = uniform_int(rng, config.min_lights, config.max_lights);
    for (int i = 0; i < n_lights; ++i) {
        PointLight light;
        for (int attempt = 0; attempt < 64; ++attempt) {
            light.position = Vec3(uniform(rng, config.light_x.lo, config.light_x.hi),
                                  uniform(rng, config.light_y.lo, config.light_y.hi),
                                  uniform(rng, config.light_z.lo, config.light_z.hi));
            const bool inside = std::any_of(scene.spheres.begin(), scene.spheres.end(), [&](const Sphere& o) {
                return (o.center - light.position).norm() < o.radius + scene.proxy_radius;
            });
            if (!inside) break;
        }
        scene.lights.push_back(light);
    }
    scene.validate();
    return scene;
}

Ray camera_ray(const Camera& camera, double px, double py) {
    const CameraBasis b = basis(camera);
    const double sx = (2.0 * px / camera.width - 1.0) * b.tan_half * b.aspect;
    const double sy = (1.0 - 2.0 * py / camera.height) * b.tan_half;
    return {camera.position, (b.forward + sx * b.right + sy * b.up).normalized()};
}

std::optional<double> intersect(const Ray& ray, const Sphere& s, double t_min) {
    const Vec3 oc = ray.origin - s.center;
    const double half_b = oc.dot(ray.direction);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = half_b * half_b - c;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    if (double t = -half_b - root; t > t_min) return t;
    if (double t = -half_b + root; t > t_min) return t;
    return std::nullopt;
}

std::optional<double> intersect(const Ray& ray, const Plane& p, double t_min) {
    const double denom = p.normal.dot(ray.direction);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = p.normal.dot(p.point - ray.origin) / denom;
    if (t > t_min) return t;
    return std::nullopt;
}

std::optional<Hit> trace(const Scene& scene, const Ray& ray) {
    std::optional<Hit> best;
    for (const auto& s : scene.spheres) {
        if (auto t = intersect(ray, s); t && (!best || *t < best->t)) {
            const Vec3 p = ray.origin + *t * ray.direction;
            best = Hit{*t, p, (p - s.center) / s.radius, s.albedo};
        }
    }
    for (const auto& pl : scene.planes) {
        if (auto t = intersect(ray, pl); t && (!best || *t < best->t)) {
            best = Hit{*t, ray.origin + *t * ray.direction, pl.normal, pl.albedo};
        }
    }
    return best;
}

double direct_radiance_factor(const Scene& scene, const Vec3& point, const Vec3& normal,
                              const Vec3& light_position) {
    const Vec3 to_light = light_position - point;
    const double dist = to_light.norm();
    const Vec3 l = to_light / dist;
    const double cos_theta = normal.dot(l);
    if (cos_theta <= 0.0) return 0.0;
    const Ray shadow{point + kShadowEpsilon * normal, l};
    for (const auto& s : scene.spheres) {
        if (auto t = intersect(shadow, s); t && *t < dist) return 0.0;
    }
    for (const auto& pl : scene.planes) {
        if (auto t = intersect(shadow, pl); t && *t < dist) return 0.0;
    }
    return cos_theta / (std::numbers::pi * dist * dist);
}

LinearImage render_ambient(const Scene& scene) {
    scene.validate();
    Image img = new_frame(scene, kBackgroundLevel);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Ray ray = camera_ray(scene.camera, x + 0.5, y + 0.5);
            if (auto hit = trace(scene, ray)) {
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = scene.ambient_level * hit->albedo[c];
            }
        }
    }
    return {std::move(img)};
}

DirectLightImage render_direct(const Scene& scene, int light_index) {
    scene.validate();
    check_light_index(scene, light_index);
    Image img = new_frame(scene, 0.0);
    const Vec3& pos = scene.lights[static_cast<std::size_t>(light_index)].position;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Ray ray = camera_ray(scene.camera, x + 0.5, y + 0.5);
            const auto hit = trace(scene, ray);
            const Rgb albedo = hit ? hit->albedo : Rgb{0.0, 0.0, 0.0};
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = light_pixel(scene, ray, hit, pos, albedo, c);
        }
    }
    return {std::move(img)};
}

DirectLightImage render_direct_all(const Scene& scene) {
    scene.validate();
    Image img = new_frame(scene, 0.0);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Ray ray = camera_ray(scene.camera, x + 0.5, y + 0.5);
            const auto hit = trace(scene, ray);
            const Rgb albedo = hit ? hit->albedo : Rgb{0.0, 0.0, 0.0};
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                for (const auto& light : scene.lights) sum += light_pixel(scene, ray, hit, light.position, albedo, c);
                img.at(x, y, c) = sum;
            }
        }
    }
    return {std::move(img)};
}

DisentangledFrame render_disentangled(const Scene& scene, int light_index) {
    check_light_index(scene, light_index);
    return {render_ambient(scene), render_direct(scene, light_index)};
}

std::optional<BoundingBox> project_sphere_box(const Camera& camera, const Vec3& center, double radius) {
    const CameraBasis b = basis(camera);
    const Vec3 rel = center - camera.position;
    const double cx = rel.dot(b.right);
    const double cy = rel.dot(b.up);
    const double cz = rel.dot(b.forward);
    if (cz <= radius) return std::nullopt;
    // Extremes of (lateral / depth) over the sphere are the tangent directions.
    auto extent = [&](double a) {
        const double denom = cz * cz - radius * radius;
        const double spread = radius * std::sqrt(a * a + cz * cz - radius * radius);
        return std::pair{(a * cz - spread) / denom, (a * cz + spread) / denom};
    };
    const auto [sx_lo, sx_hi] = extent(cx);
    const auto [sy_lo, sy_hi] = extent(cy);
    const double kx = 0.5 / (b.tan_half * b.aspect);
    const double ky = 0.5 / b.tan_half;
    return BoundingBox{0.5 + sx_lo * kx, 0.5 - sy_hi * ky, 0.5 + sx_hi * kx, 0.5 - sy_lo * ky};
}

BoundingBox light_proxy_box(const Scene& scene, const Vec3& light_position) {
    const auto raw = project_sphere_box(scene.camera, light_position, scene.proxy_radius);
    if (!raw) throw RetriableSampleError("emitter proxy is behind the camera");
    const BoundingBox box = clamp_to_unit(*raw);
    if (!box.valid()) throw RetriableSampleError("emitter proxy is outside the frame");
    return box;
}

MovementPair generate_movement_pair(const Scene& scene, int light_index, const Trajectory& trajectory,
                                    double t0, double t1) {
    check_light_index(scene, light_index);
    if (!(t0 >= 0.0 && t0 <= 1.0 && t1 >= 0.0 && t1 <= 1.0)) {
        throw ContractError("trajectory parameters must lie in [0, 1]");
    }
    if (t0 == t1) throw ContractError("movement pair needs t0 != t1");
    const Vec3 pa = trajectory.at(t0);
    const Vec3 pb = trajectory.at(t1);
    const auto raw_a = project_sphere_box(scene.camera, pa, scene.proxy_radius);
    const auto raw_b = project_sphere_box(scene.camera, pb, scene.proxy_radius);
    if (!raw_a && !raw_b) throw RetriableSampleError("emitter behind the camera in both frames");

    MovementPair pair;
    pair.t0 = t0;
    pair.t1 = t1;
    pair.src_box = light_proxy_box(scene, pa);
    pair.tgt_box = light_proxy_box(scene, pb);

    Scene moved = scene;
    const auto li = static_cast<std::size_t>(light_index);
    moved.lights[li].position = pa;
    pair.frame_a = render_disentangled(moved, light_index);
    moved.lights[li].position = pb;
    pair.frame_b = render_disentangled(moved, light_index);
    return pair;
}

}  // namespace lightmover
