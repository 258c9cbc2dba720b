#pragma once

#include "lrsgs/camera.hpp"
#include "lrsgs/gaussian_scene.hpp"
#include "lrsgs/image.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lrsgs {

struct RenderOptions {
    /// Contributions with alpha below this are skipped; also bounds each splat's tile footprint.
    /// Zero gives every splat full-screen support.
    double alpha_min = 1.0 / 255.0;
    double alpha_max = 0.99;
    /// Front-to-back accumulation stops once transmittance would drop below this. Zero disables it.
    double transmittance_cutoff = 1e-4;
    double near_plane = 0.2;
    /// Added to every projected covariance, pixels^2.
    double cov2d_floor = 0.3;
    /// Means further than this multiple of the half-screen from the image center are culled.
    double guard_band = 1.3;
    int tile_size = 16;
    int threads = 1;
};

/// A splat in screen space.
struct ProjectedGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity();
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    double reflectance = 0.0;
    double opacity = 0.0;
    /// Three-sigma screen radius, pixels.
    double radius = 0.0;
    /// Pixel footprint where alpha can reach alpha_min, inclusive bounds [x0, x1] x [y0, y1].
    std::array<int, 4> footprint{};
};

/// Projection to screen space; nullopt when culled (near plane, guard band, or no pixel reachable).
std::optional<ProjectedGaussian> project(const GaussianPrimitive& g, const CameraModel& camera, int sh_degree,
                                         const RenderOptions& options = {});

struct RenderedFrame {
    Image color;
    Image depth;
    Image reflectance;
    Image opacity;
};

/// dL/d(output channel); empty images count as zero.
struct RenderOutputGradient {
    Image color;
    Image depth;
    Image reflectance;
    Image opacity;
};

/// Forward result plus what the backward pass needs.
struct RenderPass {
    RenderedFrame frame;
    CameraModel camera;
    int sh_degree = 0;
    RenderOptions options;
    std::vector<std::optional<ProjectedGaussian>> projected;
    int tiles_x = 0;
    int tiles_y = 0;
    /// Per tile, splat indices sorted by (depth, index).
    std::vector<std::vector<std::uint32_t>> tile_lists;
    std::vector<double> final_transmittance;
    /// Number of tile-list entries consumed per pixel.
    std::vector<std::uint32_t> contributors;
    std::vector<SkySample> sky_samples;
    std::vector<Vec3> sky_raw;
};

struct RenderGradient {
    std::vector<WorldGaussianGradient> gaussians;
    std::vector<Vec3> sky;
    /// dL/d(projected mean), pixels.
    std::vector<Vec2> mean2d;
};

RenderPass render_forward(std::span<const GaussianPrimitive> gaussians, const CameraModel& camera,
                          const SkyModel& sky, int sh_degree, const RenderOptions& options = {});

RenderedFrame render(std::span<const GaussianPrimitive> gaussians, const CameraModel& camera, const SkyModel& sky,
                     int sh_degree, const RenderOptions& options = {});

/// Analytic gradients of the outputs of `pass` with respect to the world-frame primitives and the sky grid.
RenderGradient render_backward(const RenderPass& pass, std::span<const GaussianPrimitive> gaussians,
                               const SkyModel& sky, const RenderOutputGradient& grad);

inline constexpr std::size_t kOracleMaxGaussians = 10000;

/// Untiled per-pixel reference renderer with the same contract as render() minus early termination.
/// Throws OracleTooLarge above kOracleMaxGaussians.
RenderedFrame render_oracle(std::span<const GaussianPrimitive> gaussians, const CameraModel& camera,
                            const SkyModel& sky, int sh_degree, const RenderOptions& options = {});

} // namespace lrsgs
