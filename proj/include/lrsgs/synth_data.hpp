#pragma once

#include "lrsgs/camera.hpp"
#include "lrsgs/image.hpp"
#include "lrsgs/lidar_model.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lrsgs {

/// Two-color checkerboard over a surface's (u, v) coordinates.
struct Checker {
    Vec3 color_a = Vec3::Constant(0.5);
    Vec3 color_b = Vec3::Constant(0.5);
    double cell = 0.5;

    Vec3 at(double u, double v) const;
};

/// `low` where u < split, `high` elsewhere.
struct ReflectanceBands {
    double low = 0.5;
    double high = 0.5;
    double split = std::numeric_limits<double>::infinity();

    double at(double u) const { return u < split ? low : high; }
    static ReflectanceBands uniform(double value) { return {value, value}; }
};

/// Two-sided rectangle origin + u * axis_u + v * axis_v with u in [0, extent_u], v in [0, extent_v].
struct SynthSurface {
    Vec3 origin = Vec3::Zero();
    Vec3 axis_u = Vec3::UnitX();
    Vec3 axis_v = Vec3::UnitY();
    double extent_u = 1.0;
    double extent_v = 1.0;
    Checker albedo;
    ReflectanceBands reflectance;
    /// Share of the albedo's luminance pattern carried into reflectance: rho = band * (1 + c * (lum / mean_lum - 1)).
    double albedo_coupling = 0.0;
    /// -1 for static geometry; otherwise an index into SynthScene::objects and the rectangle lives in that object's frame.
    int object = -1;

    Vec3 normal() const { return axis_u.cross(axis_v).normalized(); }
    double reflectance_at(double u, double v) const;
};

/// ITU-R 601 luma.
inline double luminance(const Vec3& rgb) { return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]; }

struct SynthObject {
    Vec3 half_extents = Vec3::Constant(0.5);
    /// Object -> world, one per frame.
    std::vector<RigidTransform> trajectory;
};

struct LidarRig {
    int ring_count = 16;
    int points_per_ring = 1024;
    /// Beam elevations, degrees, evenly spaced from min (ring 0) to max.
    double elevation_min = -30.0;
    double elevation_max = 15.0;
    /// Sensor -> world, one per frame.
    std::vector<RigidTransform> sensor_poses;
};

struct SynthScene {
    std::vector<SynthSurface> surfaces;
    std::vector<SynthObject> objects;
    /// World -> camera, fixed across frames.
    std::vector<CameraModel> cameras;
    std::vector<bool> held_out;
    LidarRig lidar;
    int frame_count = 1;
    Vec3 sky_horizon = Vec3(0.75, 0.82, 0.9);
    Vec3 sky_zenith = Vec3(0.35, 0.5, 0.8);
    /// Unit direction toward the light.
    Vec3 light_direction = Vec3(-0.4, -0.3, 0.866).normalized();
    double ambient = 0.65;
    double diffuse = 0.35;

    /// Throws InvalidArgument on bad reflectance, trajectories, or per-camera flags.
    void validate() const;
    Vec3 sky_color(const Vec3& direction) const;
};

/// Adds the six outward-facing faces of an object's box (centered at its origin).
void add_box(SynthScene& scene, int object, const Checker& albedo, const ReflectanceBands& reflectance,
             double albedo_coupling = 0.0);

struct SurfaceHit {
    double distance = 0.0;
    std::size_t surface = 0;
    Vec3 point = Vec3::Zero();
    /// World normal facing the ray origin.
    Vec3 normal = Vec3::UnitZ();
    double u = 0.0;
    double v = 0.0;
};

/// First hit along a unit world ray. Throws FrameOutOfRange.
std::optional<SurfaceHit> cast_ray(const SynthScene& scene, int frame, const Vec3& origin, const Vec3& direction);

struct SweepNoise {
    double intensity_sigma = 0.0;
    double range_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Ring-by-azimuth ray cast in the sensor frame with intensity rho * cos(incidence) / range^2.
std::vector<LidarPoint> simulate_sweep(const SynthScene& scene, int frame, const SweepNoise& noise = {});

/// Lambert-shaded albedo of the first hit, sky color for misses. `samples` per axis supersampling.
Image render_gt(const SynthScene& scene, const CameraModel& camera, int frame, int samples = 1);

/// Surface reflectance of the first hit at each pixel center, 0 for misses.
Image render_gt_reflectance(const SynthScene& scene, const CameraModel& camera, int frame);

/// Pinhole camera at `position` looking at `target` with +z up in the world.
CameraModel look_at(const Vec3& position, const Vec3& target, int width, int height, double hfov_deg);

struct StandardSceneOptions {
    int width = 64;
    int height = 48;
    int frame_count = 20;
};

/// Room corner with a checkered floor and two walls, one carrying two reflectance bands of equal albedo,
/// plus a box sliding across 20 frames. Reflectance follows albedo luminance except across the band boundary.
/// 8 training and 2 held-out cameras, 16-ring LiDAR at the origin.
SynthScene standard_scene(std::uint64_t seed, const StandardSceneOptions& options = {});

/// World-frame band boundary of the standard scene's two-band wall: points with y = kBandBoundaryY on x = kBandWallX.
inline constexpr double kBandWallX = 3.5;
inline constexpr double kBandBoundaryY = 1.25;

} // namespace lrsgs
