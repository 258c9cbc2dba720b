#pragma once

#include "lrsgs/camera.hpp"
#include "lrsgs/common.hpp"
#include "lrsgs/image.hpp"

#include <optional>
#include <span>
#include <vector>

namespace lrsgs {

/// One raw LiDAR return in the sensor frame.
struct LidarPoint {
    Vec3 position = Vec3::Zero();
    double intensity = 0.0;
    int ring = 0;
    int azimuth_index = 0;
    double timestamp = 0.0;
};

/// A return after range and incidence correction.
struct CalibratedPoint {
    Vec3 position = Vec3::Zero();
    double reflectance = 0.0;
    Vec3 normal = Vec3::UnitZ();
    double incidence_cos = 1.0;
    int ring = 0;
    int azimuth_index = 0;
    /// Index into the sweep this point was calibrated from.
    std::size_t source_index = 0;
};

struct LidarModelConfig {
    /// Half-width, in azimuth steps, of the adjacent-ring window searched for the second normal neighbor.
    int neighborhood_k = 4;
    double incidence_floor = 0.05;
    double normalization_percentile = 0.99;
    int gradient_search_radius = 2;

    void validate() const;
};

struct CalibrationDiagnostics {
    std::size_t input_points = 0;
    std::size_t calibrated_points = 0;
    std::size_t degenerate_points = 0;
    /// Raw reflectance value mapped to 1.0.
    double normalization_scale = 0.0;
};

struct CalibrationResult {
    std::vector<CalibratedPoint> points;
    CalibrationDiagnostics diagnostics;
};

/// Surface normal from a point and two neighbors, oriented toward the sensor origin.
/// Throws DegenerateNeighborhood when the two neighbor offsets are parallel.
Vec3 estimate_normal(const Vec3& p, const Vec3& p1, const Vec3& p2);
std::optional<Vec3> try_estimate_normal(const Vec3& p, const Vec3& p1, const Vec3& p2);

/// |p . n| / |p| clamped to [floor, 1].
double incidence_cos(const Vec3& p, const Vec3& n, double floor = 0.05);

/// Range/incidence-corrected reflectance normalized by the sweep's upper percentile.
/// Throws EmptySweep on empty input; degenerate neighborhoods are dropped and counted.
CalibrationResult calibrate_sweep(std::span<const LidarPoint> points, const LidarModelConfig& config = {});
CalibrationResult calibrate_sweep(std::span<const LidarPoint> points, int neighborhood_k);

/// Sparse supervision images for one camera.
struct ProjectedSweep {
    SparseImage reflectance;
    SparseImage depth;
    /// Camera-frame point per pixel (zero where invalid).
    std::vector<Vec3> points;
};

/// Projects calibrated points (LiDAR frame) through the camera; nearest return wins per pixel.
ProjectedSweep project_to_camera(std::span<const CalibratedPoint> points, const CameraModel& camera);

/// Invalidates returns hidden from the camera: a pixel is dropped when another valid pixel within `radius`
/// (Chebyshev) is closer by more than `relative_gap` of its depth. Decisions use the input depths. Returns the
/// number of pixels removed.
std::size_t remove_occluded(ProjectedSweep& sweep, int radius, double relative_gap = 0.1);

/// Flat pixel indices of the horizontal and vertical gradient partners, or -1 when none is valid.
struct GradientNeighbors {
    std::int64_t horizontal = -1;
    std::int64_t vertical = -1;
};

/// Nearest valid partner per valid pixel, searched at offsets +1, -1, +2, -2, ... up to `radius`.
std::vector<GradientNeighbors> gradient_neighbors(const SparseImage& image, int radius = 2);

/// Reflectance gradient per valid pixel using metric distances between the pixels' 3D points.
SparseImage pixel_reflectance_gradient(const SparseImage& reflectance, std::span<const Vec3> points, int radius = 2);

} // namespace lrsgs
