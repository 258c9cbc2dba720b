#pragma once

#include "lrsgs/lidar_model.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace lrsgs {

enum class FeatureKind : std::uint8_t {
    None = 0,
    GeometricEdge = 1,
    GeometricPlanar = 2,
    ReflectanceEdge = 3,
};

const char* to_string(FeatureKind kind);

struct FeatureLabel {
    FeatureKind kind = FeatureKind::None;
    double smoothness = 0.0;
    double reflectance_gradient = 0.0;
};

struct FeatureThresholds {
    double edge = 0.1;
    double planar = 0.01;
    double reflectance = 0.15;
};

/// Per-ring caps on each label.
struct FeatureBudget {
    int edge = 40;
    int planar = 200;
    int reflectance = 40;
};

struct FeatureConfig {
    FeatureThresholds thresholds;
    FeatureBudget budget;
    int smoothness_k = 10;
    int left = 4;
    int right = 4;

    void validate() const;
};

/// Indices into `points` grouped per ring (ascending ring id), each ordered by azimuth_index.
std::vector<std::vector<std::size_t>> group_rings(std::span<const CalibratedPoint> points);

/// Normalized curvature over k/2 same-ring neighbors on each side.
/// `ring` must be ordered by azimuth. Throws InsufficientNeighbors.
double smoothness(std::size_t point_index, std::span<const CalibratedPoint> ring, int k = 10);

/// |mean(self + m left) - mean(n right)| of calibrated reflectance along the ring.
/// Throws InsufficientNeighbors.
double ring_reflectance_gradient(std::size_t point_index, std::span<const CalibratedPoint> ring, int m = 4,
                                 int n = 4);

/// Labels aligned with `points`. Precedence: GeometricEdge > ReflectanceEdge > GeometricPlanar.
std::vector<FeatureLabel> classify_sweep(std::span<const CalibratedPoint> points, const FeatureConfig& config = {});

/// Per-ring label counts, indexed [ring][kind].
struct FeatureSummary {
    std::vector<int> rings;
    std::vector<std::array<int, 4>> counts;
};

FeatureSummary summarize(std::span<const CalibratedPoint> points, std::span<const FeatureLabel> labels);

} // namespace lrsgs
