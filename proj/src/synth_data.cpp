#include "lrsgs/synth_data.hpp"

#include "lrsgs/parallel.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <thread>

namespace lrsgs {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

int hardware_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

void check_frame(const SynthScene& scene, int frame) {
    if (frame < 0 || frame >= scene.frame_count) {
        throw Error(ErrorCode::FrameOutOfRange,
                    "frame " + std::to_string(frame) + " outside [0, " + std::to_string(scene.frame_count) + ")");
    }
}

} // namespace

Vec3 Checker::at(double u, double v) const {
    const auto iu = static_cast<long long>(std::floor(u / cell));
    const auto iv = static_cast<long long>(std::floor(v / cell));
    return ((iu + iv) & 1) ? color_b : color_a;
}

double SynthSurface::reflectance_at(double u, double v) const {
    const double band = reflectance.at(u);
    if (albedo_coupling == 0.0) return band;
    const double mean_lum = 0.5 * (luminance(albedo.color_a) + luminance(albedo.color_b));
    const double rel = mean_lum > 0.0 ? luminance(albedo.at(u, v)) / mean_lum : 1.0;
    return std::clamp(band * (1.0 + albedo_coupling * (rel - 1.0)), 0.0, 1.0);
}

void SynthScene::validate() const {
    if (frame_count < 1) throw Error(ErrorCode::InvalidArgument, "frame_count must be positive");
    for (const auto& s : surfaces) {
        for (double r : {s.reflectance.low, s.reflectance.high}) {
            if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "surface reflectance outside [0, 1]");
        }
        if (!(s.albedo_coupling >= 0.0 && s.albedo_coupling <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "albedo_coupling must lie in [0, 1]");
        }
        if (!(s.extent_u > 0.0 && s.extent_v > 0.0) || std::abs(s.axis_u.dot(s.axis_v)) > 1e-9 ||
            std::abs(s.axis_u.norm() - 1.0) > 1e-9 || std::abs(s.axis_v.norm() - 1.0) > 1e-9) {
            throw Error(ErrorCode::InvalidArgument, "surface axes must be orthonormal with positive extents");
        }
        if (s.object >= static_cast<int>(objects.size())) {
            throw Error(ErrorCode::InvalidArgument, "surface refers to a missing object");
        }
    }
    for (const auto& o : objects) {
        if (static_cast<int>(o.trajectory.size()) != frame_count) {
            throw Error(ErrorCode::InvalidArgument, "object trajectory needs one pose per frame");
        }
        for (const auto& t : o.trajectory) {
            if (!t.is_valid()) throw Error(ErrorCode::InvalidArgument, "object pose is not rigid");
        }
    }
    if (static_cast<int>(lidar.sensor_poses.size()) != frame_count) {
        throw Error(ErrorCode::InvalidArgument, "LiDAR rig needs one sensor pose per frame");
    }
    if (lidar.ring_count < 2 || lidar.points_per_ring < 1 || !(lidar.elevation_max > lidar.elevation_min)) {
        throw Error(ErrorCode::InvalidArgument, "bad LiDAR rig layout");
    }
    if (held_out.size() != cameras.size()) {
        throw Error(ErrorCode::InvalidArgument, "held_out needs one flag per camera");
    }
    for (const auto& c : cameras) c.validate();
}

Vec3 SynthScene::sky_color(const Vec3& direction) const {
    const double t = std::clamp(direction.normalized().z(), 0.0, 1.0);
    return sky_horizon * (1.0 - t) + sky_zenith * t;
}

void add_box(SynthScene& scene, int object, const Checker& albedo, const ReflectanceBands& reflectance,
             double albedo_coupling) {
    const Vec3 h = scene.objects.at(static_cast<std::size_t>(object)).half_extents;
    // (outward normal axis, sign); u and v are the other two axes ordered so u x v points outward
    for (int axis = 0; axis < 3; ++axis) {
        for (double sign : {1.0, -1.0}) {
            const int a = (axis + 1) % 3;
            const int b = (axis + 2) % 3;
            Vec3 u = Vec3::Unit(a);
            Vec3 v = Vec3::Unit(b);
            if (sign < 0) std::swap(u, v);
            SynthSurface s;
            Vec3 center = Vec3::Zero();
            center[axis] = sign * h[axis];
            const double eu = 2.0 * h[sign > 0 ? a : b];
            const double ev = 2.0 * h[sign > 0 ? b : a];
            s.origin = center - 0.5 * eu * u - 0.5 * ev * v;
            s.axis_u = u;
            s.axis_v = v;
            s.extent_u = eu;
            s.extent_v = ev;
            s.albedo = albedo;
            s.reflectance = reflectance;
            s.albedo_coupling = albedo_coupling;
            s.object = object;
            scene.surfaces.push_back(s);
        }
    }
}

std::optional<SurfaceHit> cast_ray(const SynthScene& scene, int frame, const Vec3& origin, const Vec3& direction) {
    check_frame(scene, frame);
    std::optional<SurfaceHit> best;
    for (std::size_t i = 0; i < scene.surfaces.size(); ++i) {
        const SynthSurface& s = scene.surfaces[i];
        Vec3 o = origin;
        Vec3 d = direction;
        const RigidTransform* pose = nullptr;
        if (s.object >= 0) {
            pose = &scene.objects[static_cast<std::size_t>(s.object)].trajectory[static_cast<std::size_t>(frame)];
            o = pose->rotation.transpose() * (origin - pose->translation);
            d = pose->rotation.transpose() * direction;
        }
        const Vec3 n = s.normal();
        const double denom = d.dot(n);
        if (std::abs(denom) < 1e-12) continue;
        const double t = (s.origin - o).dot(n) / denom;
        if (!(t > 1e-9) || (best && t >= best->distance)) continue;
        const Vec3 local = o + t * d - s.origin;
        const double u = local.dot(s.axis_u);
        const double v = local.dot(s.axis_v);
        if (u < 0.0 || u > s.extent_u || v < 0.0 || v > s.extent_v) continue;
        SurfaceHit hit;
        hit.distance = t;
        hit.surface = i;
        hit.point = origin + t * direction;
        hit.normal = denom < 0.0 ? n : Vec3(-n);
        if (pose) hit.normal = pose->rotation * hit.normal;
        hit.u = u;
        hit.v = v;
        best = hit;
    }
    return best;
}

std::vector<LidarPoint> simulate_sweep(const SynthScene& scene, int frame, const SweepNoise& noise) {
    check_frame(scene, frame);
    const LidarRig& rig = scene.lidar;
    const RigidTransform& pose = rig.sensor_poses.at(static_cast<std::size_t>(frame));
    std::mt19937_64 rng(noise.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(frame) + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<LidarPoint> out;
    for (int r = 0; r < rig.ring_count; ++r) {
        const double elev =
            (rig.elevation_min + (rig.elevation_max - rig.elevation_min) * r / (rig.ring_count - 1)) * kDeg;
        for (int j = 0; j < rig.points_per_ring; ++j) {
            const double az = 2.0 * std::numbers::pi * j / rig.points_per_ring;
            const Vec3 dir(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev));
            const auto hit = cast_ray(scene, frame, pose.translation, pose.rotation * dir);
            // draw both noise samples for every ray so the stream does not depend on hit pattern
            const double range_noise = normal(rng) * noise.range_sigma;
            const double intensity_noise = normal(rng) * noise.intensity_sigma;
            if (!hit) continue;
            const auto& surface = scene.surfaces[hit->surface];
            const double cos_inc = std::abs((pose.rotation * dir).dot(hit->normal));
            const double rho = surface.reflectance_at(hit->u, hit->v);
            LidarPoint p;
            p.position = (hit->distance + range_noise) * dir;
            p.intensity = std::max(0.0, rho * cos_inc / (hit->distance * hit->distance) + intensity_noise);
            p.ring = r;
            p.azimuth_index = j;
            p.timestamp = 0.1 * frame + 0.1 * j / rig.points_per_ring;
            out.push_back(p);
        }
    }
    return out;
}

Image render_gt(const SynthScene& scene, const CameraModel& camera, int frame, int samples) {
    check_frame(scene, frame);
    if (samples < 1) throw Error(ErrorCode::InvalidArgument, "samples must be positive");
    Image img(camera.width, camera.height, 3);
    const Vec3 origin = camera.center();
    parallel_chunks(static_cast<std::size_t>(camera.height), hardware_threads(), [&](std::size_t, std::size_t y0,
                                                                                    std::size_t y1) {
        for (auto y = static_cast<int>(y0); y < static_cast<int>(y1); ++y) {
            for (int x = 0; x < camera.width; ++x) {
                Vec3 sum = Vec3::Zero();
                for (int sy = 0; sy < samples; ++sy) {
                    for (int sx = 0; sx < samples; ++sx) {
                        const double u = x + (sx + 0.5) / samples - 0.5;
                        const double v = y + (sy + 0.5) / samples - 0.5;
                        const Vec3 dir = camera.ray_direction(u, v);
                        const auto hit = cast_ray(scene, frame, origin, dir);
                        if (!hit) {
                            sum += scene.sky_color(dir);
                            continue;
                        }
                        const auto& s = scene.surfaces[hit->surface];
                        const double shade =
                            scene.ambient + scene.diffuse * std::max(0.0, hit->normal.dot(scene.light_direction));
                        sum += s.albedo.at(hit->u, hit->v) * shade;
                    }
                }
                const Vec3 c = sum / static_cast<double>(samples * samples);
                for (int k = 0; k < 3; ++k) img(x, y, k) = std::clamp(c[k], 0.0, 1.0);
            }
        }
    });
    return img;
}

Image render_gt_reflectance(const SynthScene& scene, const CameraModel& camera, int frame) {
    check_frame(scene, frame);
    Image img(camera.width, camera.height, 1);
    const Vec3 origin = camera.center();
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const auto hit = cast_ray(scene, frame, origin, camera.ray_direction(x, y));
            if (hit) img(x, y) = scene.surfaces[hit->surface].reflectance_at(hit->u, hit->v);
        }
    }
    return img;
}

CameraModel look_at(const Vec3& position, const Vec3& target, int width, int height, double hfov_deg) {
    const Vec3 forward = (target - position).normalized();
    Vec3 right = forward.cross(Vec3::UnitZ());
    if (right.norm() < 1e-9) throw Error(ErrorCode::InvalidArgument, "look_at direction is vertical");
    right.normalize();
    const Vec3 down = forward.cross(right);
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    const double f = 0.5 * width / std::tan(0.5 * hfov_deg * kDeg);
    cam.intrinsics = {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
    cam.extrinsics.rotation.row(0) = right.transpose();
    cam.extrinsics.rotation.row(1) = down.transpose();
    cam.extrinsics.rotation.row(2) = forward.transpose();
    cam.extrinsics.translation = -(cam.extrinsics.rotation * position);
    return cam;
}

SynthScene standard_scene(std::uint64_t seed, const StandardSceneOptions& options) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);

    SynthScene scene;
    scene.frame_count = options.frame_count;
    const double floor_z = -1.2;
    const double top_z = 1.3;
    const double lo = -1.5;
    const double hi = kBandWallX;

    SynthSurface ground;
    ground.origin = Vec3(lo, lo, floor_z);
    ground.axis_u = Vec3::UnitX();
    ground.axis_v = Vec3::UnitY();
    ground.extent_u = ground.extent_v = hi - lo;
    ground.albedo = {Vec3(0.56, 0.52, 0.46), Vec3(0.44, 0.41, 0.36), 0.5};
    ground.reflectance = ReflectanceBands::uniform(0.45);
    ground.albedo_coupling = 1.0;
    scene.surfaces.push_back(ground);

    // Two-band wall: identical albedo on both sides of the reflectance boundary.
    SynthSurface band_wall;
    band_wall.origin = Vec3(kBandWallX, lo, floor_z);
    band_wall.axis_u = Vec3::UnitY();
    band_wall.axis_v = Vec3::UnitZ();
    band_wall.extent_u = hi - lo;
    band_wall.extent_v = top_z - floor_z;
    band_wall.albedo = {Vec3(0.62, 0.64, 0.68), Vec3(0.5, 0.53, 0.58), 0.5};
    band_wall.reflectance = {0.22, 0.7, kBandBoundaryY - lo};
    band_wall.albedo_coupling = 1.0;
    scene.surfaces.push_back(band_wall);

    SynthSurface side_wall;
    side_wall.origin = Vec3(lo, hi, floor_z);
    side_wall.axis_u = Vec3::UnitX();
    side_wall.axis_v = Vec3::UnitZ();
    side_wall.extent_u = hi - lo;
    side_wall.extent_v = top_z - floor_z;
    side_wall.albedo = {Vec3(0.66, 0.6, 0.55), Vec3(0.55, 0.49, 0.45), 0.5};
    side_wall.reflectance = ReflectanceBands::uniform(0.5);
    side_wall.albedo_coupling = 1.0;
    scene.surfaces.push_back(side_wall);

    SynthObject box;
    box.half_extents = Vec3(0.3, 0.3, 0.3);
    const Vec3 start(2.3 + 0.05 * jitter(rng), 0.0 + 0.05 * jitter(rng), floor_z + box.half_extents.z());
    const Vec3 travel(0.0, 2.0, 0.0);
    for (int f = 0; f < scene.frame_count; ++f) {
        const double s = scene.frame_count > 1 ? static_cast<double>(f) / (scene.frame_count - 1) : 0.0;
        RigidTransform t;
        t.translation = start + s * travel;
        box.trajectory.push_back(t);
    }
    scene.objects.push_back(box);
    add_box(scene, 0, {Vec3(0.88, 0.6, 0.4), Vec3(0.78, 0.5, 0.34), 0.2}, ReflectanceBands::uniform(0.6), 1.0);

    scene.lidar.sensor_poses.assign(static_cast<std::size_t>(scene.frame_count), RigidTransform::identity());

    const Vec3 target(3.2, 2.0, -0.5);
    const Vec3 view = (target - Vec3::Zero()).normalized();
    const Vec3 side = view.cross(Vec3::UnitZ()).normalized();
    auto add_camera = [&](double lateral, double height, bool held_out) {
        const Vec3 pos = lateral * side + height * Vec3::UnitZ() +
                         0.02 * Vec3(jitter(rng), jitter(rng), jitter(rng));
        scene.cameras.push_back(look_at(pos, target, options.width, options.height, 60.0));
        scene.held_out.push_back(held_out);
    };
    for (double height : {-0.15, 0.15}) {
        for (double lateral : {-0.45, -0.15, 0.15, 0.45}) add_camera(lateral, height, false);
    }
    add_camera(-0.3, 0.0, true);
    add_camera(0.3, 0.0, true);
    scene.validate();
    return scene;
}

} // namespace lrsgs
