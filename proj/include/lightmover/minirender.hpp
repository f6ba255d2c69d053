#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "lightmover/bounding_box.hpp"
#include "lightmover/image.hpp"
#include "lightmover/radiometry.hpp"

namespace lightmover {

using Vec3 = Eigen::Vector3d;

struct Sphere {
    Vec3 center;
    double radius = 1.0;
    Rgb albedo{0.5, 0.5, 0.5};
};

struct Plane {
    Vec3 point;
    Vec3 normal;  // unit length
    Rgb albedo{0.5, 0.5, 0.5};
};

/// Point emitter. Emission is fixed to white at unit intensity so that color
/// and gain can be applied afterwards by relight().
struct PointLight {
    Vec3 position;

    static constexpr Rgb kEmission{1.0, 1.0, 1.0};
};

struct Camera {
    Vec3 position{0.0, 2.2, -3.4};
    Vec3 look_at{0.0, 0.2, 0.6};
    Vec3 up{0.0, 1.0, 0.0};
    double vfov_degrees = 50.0;
    int width = 64;
    int height = 64;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

inline constexpr double kBackgroundLevel = 0.02;

struct Scene {
    std::vector<Sphere> spheres;
    std::vector<Plane> planes;
    std::vector<PointLight> lights;
    Camera camera;
    double ambient_level = 0.05;
    // Emitters are drawn as small glowing spheres in the direct-light pass so
    // the light source is a visible, croppable object.
    double proxy_radius = 0.2;
    double proxy_radiance = 1.0;

    void validate() const;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SceneConfig {
    int min_spheres = 1;
    int max_spheres = 3;
    int min_lights = 1;
    int max_lights = 1;
    Range sphere_radius{0.2, 0.45};
    Range sphere_x{-1.3, 1.3};
    Range sphere_z{-0.2, 1.8};
    Range albedo{0.3, 0.9};
    Range light_x{-1.3, 1.3};
    Range light_y{0.5, 1.2};
    Range light_z{-0.5, 1.6};
    Range ambient_level{0.02, 0.08};
    bool back_wall = true;
    double wall_z = 2.6;
    Camera camera;

    void validate() const;
};

Scene sample_scene(std::uint64_t seed, const SceneConfig& config);

Ray camera_ray(const Camera& camera, double px, double py);

/// First intersection distance along the ray, if any, beyond `t_min`.
std::optional<double> intersect(const Ray& ray, const Sphere& s, double t_min = 1e-9);
std::optional<double> intersect(const Ray& ray, const Plane& p, double t_min = 1e-9);

struct Hit {
    double t = 0.0;
    Vec3 point;
    Vec3 normal;
    Rgb albedo;
};

std::optional<Hit> trace(const Scene& scene, const Ray& ray);

/// Lambertian radiance from one light at a surface point, zero when occluded.
double direct_radiance_factor(const Scene& scene, const Vec3& point, const Vec3& normal,
                              const Vec3& light_position);

struct DisentangledFrame {
    LinearImage amb;
    DirectLightImage light;
};

/// Ambient pass and the direct pass for lights[light_index] only.
DisentangledFrame render_disentangled(const Scene& scene, int light_index);

/// Ambient pass alone; it never depends on emitter positions.
LinearImage render_ambient(const Scene& scene);

/// Direct pass for one light, including its emissive proxy.
DirectLightImage render_direct(const Scene& scene, int light_index);

/// Direct pass with every light active in a single traversal.
DirectLightImage render_direct_all(const Scene& scene);

/// Exact screen-space bounding box of a sphere, in normalized coordinates and
/// not clamped. Empty when the sphere is not entirely in front of the camera.
std::optional<BoundingBox> project_sphere_box(const Camera& camera, const Vec3& center,
                                              double radius);

struct Trajectory {
    Vec3 start;
    Vec3 end;

    Vec3 at(double t) const { return start + t * (end - start); }
};

struct MovementPair {
    DisentangledFrame frame_a;
    DisentangledFrame frame_b;
    BoundingBox src_box;
    BoundingBox tgt_box;
    std::uint64_t seed = 0;
    double t0 = 0.0;
    double t1 = 0.0;
};

/// Renders the selected light at trajectory(t0) and trajectory(t1). Throws
/// RetriableSampleError when a proxy cannot be boxed on screen.
MovementPair generate_movement_pair(const Scene& scene, int light_index,
                                    const Trajectory& trajectory, double t0, double t1);

/// Screen box of the emitter proxy, clamped to the frame.
BoundingBox light_proxy_box(const Scene& scene, const Vec3& light_position);

}  // namespace lightmover
