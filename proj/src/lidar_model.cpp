#include "lrsgs/lidar_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace lrsgs {

namespace {

constexpr double kParallelTolerance = 1e-9;

} // namespace

void LidarModelConfig::validate() const {
    if (neighborhood_k < 1) {
        throw Error(ErrorCode::Config, "lidar_model.neighborhood_k must be >= 1");
    }
    if (!(incidence_floor > 0.0 && incidence_floor <= 1.0)) {
        throw Error(ErrorCode::Config, "lidar_model.incidence_floor must lie in (0, 1]");
    }
    if (!(normalization_percentile > 0.0 && normalization_percentile <= 1.0)) {
        throw Error(ErrorCode::Config, "lidar_model.normalization_percentile must lie in (0, 1]");
    }
    if (gradient_search_radius < 1) {
        throw Error(ErrorCode::Config, "lidar_model.gradient_search_radius must be >= 1");
    }
}

std::optional<Vec3> try_estimate_normal(const Vec3& p, const Vec3& p1, const Vec3& p2) {
    const Vec3 a = p - p1;
    const Vec3 b = p - p2;
    const double scale = a.norm() * b.norm();
    if (!(scale > 0.0)) {
        return std::nullopt;
    }
    const Vec3 n = a.cross(b) / scale;
    const double len = n.norm();
    if (!(len > kParallelTolerance)) {
        return std::nullopt;
    }
    Vec3 unit = n / len;
    if (unit.dot(p) > 0.0) {
        unit = -unit;
    }
    return unit;
}

Vec3 estimate_normal(const Vec3& p, const Vec3& p1, const Vec3& p2) {
    if (auto n = try_estimate_normal(p, p1, p2)) {
        return *n;
    }
    throw Error(ErrorCode::DegenerateNeighborhood, "neighbor offsets are parallel");
}

double incidence_cos(const Vec3& p, const Vec3& n, double floor) {
    const double r = p.norm();
    if (!(r > 0.0)) {
        return floor;
    }
    return std::clamp(std::abs(p.dot(n)) / r, floor, 1.0);
}

CalibrationResult calibrate_sweep(std::span<const LidarPoint> points, int neighborhood_k) {
    LidarModelConfig config;
    config.neighborhood_k = neighborhood_k;
    return calibrate_sweep(points, config);
}

CalibrationResult calibrate_sweep(std::span<const LidarPoint> points, const LidarModelConfig& config) {
    config.validate();
    if (points.empty()) {
        throw Error(ErrorCode::EmptySweep, "sweep contains no points");
    }

    // ring -> indices ordered by azimuth
    std::map<int, std::vector<std::size_t>> rings;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].position.norm() > 0.0) || points[i].ring < 0) {
            continue;
        }
        rings[points[i].ring].push_back(i);
    }
    for (auto& [ring, idx] : rings) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return points[a].azimuth_index < points[b].azimuth_index;
        });
    }

    auto nearest_in_ring = [&](int ring, int azimuth, const Vec3& p) -> std::optional<std::size_t> {
        const auto it = rings.find(ring);
        if (it == rings.end()) {
            return std::nullopt;
        }
        const auto& idx = it->second;
        auto lo = std::lower_bound(idx.begin(), idx.end(), azimuth - config.neighborhood_k,
                                   [&](std::size_t a, int az) { return points[a].azimuth_index < az; });
        std::optional<std::size_t> best;
        double best_d = 0.0;
        for (auto j = lo; j != idx.end() && points[*j].azimuth_index <= azimuth + config.neighborhood_k; ++j) {
            const double d = (points[*j].position - p).squaredNorm();
            if (!best || d < best_d) {
                best = *j;
                best_d = d;
            }
        }
        return best;
    };

    CalibrationResult result;
    result.diagnostics.input_points = points.size();
    std::vector<double> raw;

    for (const auto& [ring, idx] : rings) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const LidarPoint& lp = points[idx[k]];
            const Vec3& p = lp.position;

            // same-ring partner: closer of the previous / next azimuth neighbor
            std::optional<std::size_t> p1;
            double d1 = 0.0;
            for (const std::size_t cand : {k - 1, k + 1}) {
                if (cand >= idx.size()) {
                    continue;
                }
                const double d = (points[idx[cand]].position - p).squaredNorm();
                if (!p1 || d < d1) {
                    p1 = idx[cand];
                    d1 = d;
                }
            }
            // cross-ring partner: nearest point on an adjacent ring within the azimuth window
            std::optional<std::size_t> p2;
            double d2 = 0.0;
            for (const int adj : {ring - 1, ring + 1}) {
                if (auto cand = nearest_in_ring(adj, lp.azimuth_index, p)) {
                    const double d = (points[*cand].position - p).squaredNorm();
                    if (!p2 || d < d2) {
                        p2 = cand;
                        d2 = d;
                    }
                }
            }

            std::optional<Vec3> normal;
            if (p1 && p2) {
                normal = try_estimate_normal(p, points[*p1].position, points[*p2].position);
            }
            if (!normal) {
                ++result.diagnostics.degenerate_points;
                continue;
            }

            CalibratedPoint cp;
            cp.position = p;
            cp.normal = *normal;
            cp.incidence_cos = incidence_cos(p, *normal, config.incidence_floor);
            cp.ring = lp.ring;
            cp.azimuth_index = lp.azimuth_index;
            cp.source_index = idx[k];
            raw.push_back(std::max(lp.intensity, 0.0) * p.squaredNorm() / cp.incidence_cos);
            result.points.push_back(cp);
        }
    }

    result.diagnostics.calibrated_points = result.points.size();
    if (result.points.empty()) {
        return result;
    }

    std::vector<double> sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(config.normalization_percentile * static_cast<double>(sorted.size())));
    const double scale = sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
    result.diagnostics.normalization_scale = scale;

    for (std::size_t i = 0; i < result.points.size(); ++i) {
        result.points[i].reflectance = scale > 0.0 ? std::clamp(raw[i] / scale, 0.0, 1.0) : 0.0;
    }
    return result;
}

ProjectedSweep project_to_camera(std::span<const CalibratedPoint> points, const CameraModel& camera) {
    camera.validate();
    ProjectedSweep out{SparseImage(camera.width, camera.height), SparseImage(camera.width, camera.height),
                       std::vector<Vec3>(static_cast<std::size_t>(camera.width) * camera.height, Vec3::Zero())};

    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3 pc = camera.to_camera(points[i].position);
        const auto uv = camera.project(pc);
        if (!uv) {
            continue;
        }
        const double px = std::floor(uv->x() + 0.5);
        const double py = std::floor(uv->y() + 0.5);
        if (px < 0.0 || py < 0.0 || px >= camera.width || py >= camera.height) {
            continue;
        }
        const int x = static_cast<int>(px);
        const int y = static_cast<int>(py);
        const auto pix = out.depth.index(x, y);
        if (out.depth.valid[pix]) {
            // total order (z, point index) keeps collisions deterministic
            const double z_old = out.depth.values[pix];
            const auto i_old = out.depth.point_index[pix];
            if (z_old < pc.z() || (z_old == pc.z() && i_old < static_cast<std::int64_t>(i))) {
                continue;
            }
        }
        out.depth.set(x, y, pc.z(), static_cast<std::int64_t>(i));
        out.reflectance.set(x, y, points[i].reflectance, static_cast<std::int64_t>(i));
        out.points[pix] = pc;
    }
    return out;
}

std::size_t remove_occluded(ProjectedSweep& sweep, int radius, double relative_gap) {
    if (radius < 0 || relative_gap < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "occlusion radius and gap must be non-negative");
    }
    const SparseImage& depth = sweep.depth;
    std::vector<std::size_t> hidden;
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (!depth.is_valid(x, y)) {
                continue;
            }
            const double limit = depth.value(x, y) * (1.0 - relative_gap);
            bool occluded = false;
            for (int ny = std::max(0, y - radius); ny <= std::min(depth.height - 1, y + radius) && !occluded; ++ny) {
                for (int nx = std::max(0, x - radius); nx <= std::min(depth.width - 1, x + radius); ++nx) {
                    if (depth.is_valid(nx, ny) && depth.value(nx, ny) < limit) {
                        occluded = true;
                        break;
                    }
                }
            }
            if (occluded) {
                hidden.push_back(depth.index(x, y));
            }
        }
    }
    for (const std::size_t pix : hidden) {
        for (SparseImage* img : {&sweep.depth, &sweep.reflectance}) {
            img->valid[pix] = 0;
            img->values[pix] = 0.0;
            img->point_index[pix] = -1;
        }
        sweep.points[pix] = Vec3::Zero();
    }
    return hidden.size();
}

std::vector<GradientNeighbors> gradient_neighbors(const SparseImage& image, int radius) {
    std::vector<GradientNeighbors> out(image.values.size());
    auto search = [&](int x, int y, int dx, int dy) -> std::int64_t {
        for (int r = 1; r <= radius; ++r) {
            for (const int s : {r, -r}) {
                const int nx = x + s * dx;
                const int ny = y + s * dy;
                if (nx < 0 || ny < 0 || nx >= image.width || ny >= image.height) {
                    continue;
                }
                if (image.is_valid(nx, ny)) {
                    return static_cast<std::int64_t>(image.index(nx, ny));
                }
            }
        }
        return -1;
    };
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (!image.is_valid(x, y)) {
                continue;
            }
            auto& n = out[image.index(x, y)];
            n.horizontal = search(x, y, 1, 0);
            n.vertical = search(x, y, 0, 1);
        }
    }
    return out;
}

SparseImage pixel_reflectance_gradient(const SparseImage& reflectance, std::span<const Vec3> points, int radius) {
    if (points.size() != reflectance.values.size()) {
        throw Error(ErrorCode::DimensionMismatch, "per-pixel points do not match the reflectance image");
    }
    SparseImage out(reflectance.width, reflectance.height);
    const auto partners = gradient_neighbors(reflectance, radius);

    auto term = [&](std::size_t i, std::int64_t j) {
        if (j < 0) {
            return 0.0;
        }
        const double dist = (points[i] - points[static_cast<std::size_t>(j)]).norm();
        if (!(dist > 0.0)) {
            return 0.0;
        }
        return (reflectance.values[i] - reflectance.values[static_cast<std::size_t>(j)]) / dist;
    };

    for (std::size_t i = 0; i < reflectance.values.size(); ++i) {
        if (!reflectance.valid[i]) {
            continue;
        }
        const double gh = term(i, partners[i].horizontal);
        const double gv = term(i, partners[i].vertical);
        out.values[i] = std::sqrt(gh * gh + gv * gv);
        out.valid[i] = 1;
        out.point_index[i] = reflectance.point_index[i];
    }
    return out;
}

} // namespace lrsgs
