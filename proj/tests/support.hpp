#pragma once

#include "lrsgs/camera.hpp"
#include "lrsgs/dataset.hpp"
#include "lrsgs/gaussian_scene.hpp"
#include "lrsgs/rasterizer.hpp"

#include <cmath>
#include <random>

namespace lrsgs::testing {

/// Camera at the origin looking down +z with the given horizontal field of view.
inline CameraModel make_camera(int width, int height, double hfov_deg = 60.0) {
    CameraModel cam;
    const double f = 0.5 * width / std::tan(0.5 * hfov_deg * 3.14159265358979323846 / 180.0);
    cam.intrinsics = {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
    cam.width = width;
    cam.height = height;
    return cam;
}

inline Vec4 random_quaternion(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return normalize_quaternion(Vec4(n(rng), n(rng), n(rng), n(rng)));
}

/// A primitive of the given kind somewhere inside the camera's view, 2-6 m away.
inline GaussianPrimitive random_primitive(std::mt19937_64& rng, SalienceKind kind, int sh_degree = 2) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> depth(2.0, 6.0);
    std::uniform_real_distribution<double> log_scale(std::log(0.03), std::log(0.3));
    const double z = depth(rng);
    const Vec3 mean(0.45 * z * u(rng), 0.35 * z * u(rng), z);
    const Vec4 q = random_quaternion(rng);
    GaussianPrimitive g;
    switch (kind) {
    case SalienceKind::EdgeSalient:
        g = GaussianPrimitive::edge_salient(mean, q, std::exp(log_scale(rng)), std::exp(log_scale(rng)));
        break;
    case SalienceKind::PlanarSalient:
        g = GaussianPrimitive::planar_salient(mean, q, std::exp(log_scale(rng)), std::exp(log_scale(rng)));
        break;
    default:
        g = GaussianPrimitive::non_salient(mean, q,
                                           Vec3(std::exp(log_scale(rng)), std::exp(log_scale(rng)),
                                                std::exp(log_scale(rng))));
    }
    g.opacity_logit = 2.0 * u(rng);
    g.reflectance_logit = 1.5 * u(rng);
    for (int k = 0; k < sh_coeff_count(sh_degree); ++k) {
        const double amp = k == 0 ? 0.8 : 0.15;
        g.sh[k] = amp * Vec3(u(rng), u(rng), u(rng));
    }
    return g;
}

inline SalienceKind kind_at(std::size_t i) { return static_cast<SalienceKind>(i % 3); }

inline std::vector<GaussianPrimitive> random_gaussians(std::mt19937_64& rng, std::size_t count, int sh_degree = 2) {
    std::vector<GaussianPrimitive> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_primitive(rng, kind_at(i), sh_degree));
    return out;
}

inline SkyModel random_sky(std::mt19937_64& rng, int rows = 8, int cols = 16) {
    std::uniform_real_distribution<double> u(0.1, 0.9);
    SkyModel sky(rows, cols, Vec3::Zero());
    for (auto& t : sky.texels) t = Vec3(u(rng), u(rng), u(rng));
    return sky;
}

/// Render options with smooth, untruncated blending.
inline RenderOptions exact_options() {
    RenderOptions o;
    o.alpha_min = 0.0;
    o.transmittance_cutoff = 0.0;
    return o;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
}

/// A scene, one supervised view of it, and the camera that view uses.
struct SmallProblem {
    SceneGraph scene;
    View view;
    CameraModel camera;
};

/// `count` random primitives (a quarter of them on a moving object) in front of a `width` x `height` camera,
/// supervised at frame 1 by the render of a perturbed copy with LiDAR targets on about half the covered pixels.
inline SmallProblem small_problem(std::uint64_t seed, std::size_t count, int width, int height) {
    std::mt19937_64 rng(seed);
    SmallProblem p;
    p.camera = make_camera(width, height);
    SceneGraph& s = p.scene;
    s.frame_count = 2;
    const std::size_t on_object = count / 4;
    s.background = random_gaussians(rng, count - on_object);
    RigidObject obj;
    obj.gaussians = random_gaussians(rng, on_object);
    for (auto& g : obj.gaussians) g.mean = 0.25 * (g.mean - Vec3(0.0, 0.0, g.mean.z()));
    for (int f = 0; f < 2; ++f) {
        obj.poses.push_back({quaternion_from_axis_angle(Vec3(0.3, 1.0, 0.2).normalized(), 0.2 + 0.1 * f),
                             Vec3(0.1 * f - 0.2, 0.1, 3.0)});
    }
    obj.bbox = Vec3::Constant(0.8);
    s.objects.push_back(obj);
    s.sky = random_sky(rng, 4, 8);
    s.assign_ids();

    SceneGraph target = s;
    std::normal_distribution<double> n(0.0, 1.0);
    auto perturb = [&](GaussianPrimitive& g) {
        g.mean += 0.05 * Vec3(n(rng), n(rng), n(rng));
        g.reflectance_logit += 0.5 * n(rng);
        g.opacity_logit += 0.3 * n(rng);
        for (auto& c : g.sh) c += 0.05 * Vec3(n(rng), n(rng), n(rng));
    };
    for (auto& g : target.background) perturb(g);
    for (auto& g : target.objects[0].gaussians) perturb(g);

    p.view.frame = 1;
    p.view.camera = 0;
    const RenderedFrame gt = render(world_gaussians(target, 1), p.camera, target.sky, target.sh_degree, exact_options());
    p.view.rgb = gt.color;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProjectedSweep sweep{SparseImage(width, height), SparseImage(width, height),
                         std::vector<Vec3>(static_cast<std::size_t>(width) * height)};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (gt.opacity(x, y) < 0.5 || u(rng) < 0.5) continue;
            const double z = gt.depth(x, y) / gt.opacity(x, y);
            sweep.depth.set(x, y, z);
            sweep.reflectance.set(x, y, gt.reflectance(x, y));
            sweep.points[sweep.depth.index(x, y)] = p.camera.unproject(x, y, z);
        }
    }
    p.view.lidar = make_lidar_targets(sweep);
    return p;
}

/// Replaces the view's targets with the current render shifted by a random +-[margin, 3 * margin] per pixel,
/// keeping every L1 residual away from its kink.
inline void offset_targets(SmallProblem& p, std::uint64_t seed, double margin = 0.03) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1.0, 3.0);
    std::bernoulli_distribution flip(0.5);
    auto shift = [&] { return (flip(rng) ? 1.0 : -1.0) * margin * u(rng); };
    const RenderedFrame now =
        render(world_gaussians(p.scene, p.view.frame), p.camera, p.scene.sky, p.scene.sh_degree, exact_options());
    for (std::size_t i = 0; i < now.color.data().size(); ++i) p.view.rgb.data()[i] = now.color.data()[i] + shift();
    const int w = p.camera.width, h = p.camera.height;
    ProjectedSweep sweep{SparseImage(w, h), SparseImage(w, h), std::vector<Vec3>(static_cast<std::size_t>(w) * h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!p.view.lidar.depth.is_valid(x, y)) continue;
            const double z = now.depth(x, y) + 5.0 * shift();
            sweep.depth.set(x, y, z);
            sweep.reflectance.set(x, y, now.reflectance(x, y) + shift());
            sweep.points[sweep.depth.index(x, y)] = p.camera.unproject(x, y, z);
        }
    }
    p.view.lidar = make_lidar_targets(sweep);
}

} // namespace lrsgs::testing
