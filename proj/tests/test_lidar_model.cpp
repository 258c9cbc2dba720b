#include "lrsgs/lidar_model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numbers>

using namespace lrsgs;
using namespace lrsgs::testing;

namespace {

/// Rings x azimuth grid of returns on the wall x = distance, with intensities chosen so the uncorrected
/// reflectance I * R^2 / cos equals `rho(ring, j)`.
template <class Rho>
std::vector<LidarPoint> wall_sweep(double distance, Rho rho, int rings = 8, int per_ring = 60) {
    std::vector<LidarPoint> pts;
    const double deg = std::numbers::pi / 180.0;
    for (int r = 0; r < rings; ++r) {
        const double e = (-14.0 + 28.0 * r / (rings - 1)) * deg;
        for (int j = 0; j < per_ring; ++j) {
            const double a = (-35.0 + 70.0 * j / (per_ring - 1)) * deg;
            const Vec3 dir(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
            LidarPoint p;
            p.position = dir * (distance / dir.x());
            const double range = p.position.norm();
            const double cos_inc = distance / range;
            p.intensity = rho(r, j) * cos_inc / (range * range);
            p.ring = r;
            p.azimuth_index = j;
            pts.push_back(p);
        }
    }
    return pts;
}

} // namespace

TEST_CASE("normal of an axis-aligned plane faces the sensor") {
    const Vec3 n = estimate_normal(Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0, 1, 1));
    CHECK(n.x() == doctest::Approx(0.0));
    CHECK(n.y() == doctest::Approx(0.0));
    CHECK(n.z() == doctest::Approx(-1.0));
    const Vec3 m = estimate_normal(Vec3(0, 0, 1), Vec3(2, 0, 1), Vec3(0, 3, 1));
    CHECK((m - n).norm() < 1e-12);
}

TEST_CASE("collinear neighbors are degenerate") {
    CHECK_THROWS_AS(estimate_normal(Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(2, 0, 1)), Error);
    CHECK_FALSE(try_estimate_normal(Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(-3, 0, 1)).has_value());
}

TEST_CASE("normal is symmetric in its neighbors and unit length") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 500; ++i) {
        const Vec3 p(u(rng), u(rng), u(rng) + 5.0), p1(u(rng), u(rng), u(rng)), p2(u(rng), u(rng), u(rng));
        const auto a = try_estimate_normal(p, p1, p2);
        const auto b = try_estimate_normal(p, p2, p1);
        REQUIRE(a.has_value() == b.has_value());
        if (!a) continue;
        CHECK(std::abs(a->norm() - 1.0) < 1e-9);
        CHECK((*a - *b).norm() < 1e-12);
        CHECK(a->dot(p) <= 0.0);
    }
}

TEST_CASE("incidence cosine examples") {
    CHECK(incidence_cos(Vec3(0, 0, 2), Vec3(0, 0, -1)) == doctest::Approx(1.0));
    CHECK(incidence_cos(Vec3(1, 0, 0), Vec3(0, 0, 1)) == doctest::Approx(0.05));
    CHECK(incidence_cos(Vec3(1, 0, 1), Vec3(0, 0, -1)) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("uniform wall calibrates to one") {
    // I = 0.5 at R = 2 head-on gives 2.0 everywhere, which is also the 99th percentile
    const auto sweep = wall_sweep(2.0, [](int, int) { return 2.0; });
    const CalibrationResult r = calibrate_sweep(sweep);
    REQUIRE(r.points.size() == sweep.size());
    CHECK(r.diagnostics.normalization_scale == doctest::Approx(2.0).epsilon(1e-9));
    for (const auto& p : r.points) {
        CHECK(p.reflectance == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::abs(p.normal.norm() - 1.0) < 1e-9);
        CHECK(p.incidence_cos > 0.0);
        CHECK(p.incidence_cos <= 1.0);
    }
}

TEST_CASE("two materials keep their intensity ratio") {
    const auto sweep = wall_sweep(3.0, [](int, int j) { return j < 30 ? 0.2 : 0.4; });
    const CalibrationResult r = calibrate_sweep(sweep);
    for (const auto& p : r.points) {
        const double expected = p.azimuth_index < 30 ? 0.5 : 1.0;
        CHECK(p.reflectance == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("calibration ignores a global intensity scale") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> rho(8 * 60);
    for (auto& v : rho) v = u(rng);
    auto sweep = wall_sweep(2.5, [&](int r, int j) { return rho[static_cast<std::size_t>(r * 60 + j)]; });
    const CalibrationResult a = calibrate_sweep(sweep);
    for (auto& p : sweep) p.intensity *= 3.7;
    const CalibrationResult b = calibrate_sweep(sweep);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].reflectance == doctest::Approx(b.points[i].reflectance).epsilon(1e-12));
        CHECK(a.points[i].reflectance >= 0.0);
        CHECK(a.points[i].reflectance <= 1.0);
    }
}

TEST_CASE("collinear sweep calibrates nothing") {
    std::vector<LidarPoint> sweep;
    for (int r = 0; r < 2; ++r) {
        for (int j = 0; j < 20; ++j) {
            LidarPoint p;
            p.position = Vec3(1.0 + 0.1 * j + 0.05 * r, 0.0, 0.0);
            p.intensity = 1.0;
            p.ring = r;
            p.azimuth_index = j;
            sweep.push_back(p);
        }
    }
    const CalibrationResult r = calibrate_sweep(sweep);
    CHECK(r.points.empty());
    CHECK(r.diagnostics.calibrated_points == 0);
    CHECK(r.diagnostics.degenerate_points == sweep.size());
}

TEST_CASE("empty sweep is rejected") {
    CHECK_THROWS_AS(calibrate_sweep(std::vector<LidarPoint>{}), Error);
}

TEST_CASE("projection follows the principal ray and nearest return wins") {
    CameraModel cam = make_camera(64, 48);
    auto point = [](Vec3 pos, double refl, std::size_t idx) {
        CalibratedPoint p;
        p.position = pos;
        p.reflectance = refl;
        p.source_index = idx;
        return p;
    };
    const double cx = cam.intrinsics.cx, cy = cam.intrinsics.cy;
    const std::vector<CalibratedPoint> pts = {
        point(Vec3(0, 0, 7), 0.2, 0),
        point(Vec3(0, 0, 3), 0.8, 1),
        point(Vec3(0, 0, -1), 0.5, 2),
        point(Vec3(100, 0, 1), 0.5, 3),
    };
    const ProjectedSweep s = project_to_camera(pts, cam);
    const int x = static_cast<int>(std::lround(cx)), y = static_cast<int>(std::lround(cy));
    REQUIRE(s.depth.is_valid(x, y));
    CHECK(s.depth.values[s.depth.index(x, y)] == doctest::Approx(3.0));
    CHECK(s.reflectance.values[s.reflectance.index(x, y)] == doctest::Approx(0.8));
    CHECK(s.reflectance.point_index[s.reflectance.index(x, y)] == 1);
    std::size_t valid = 0;
    for (auto v : s.depth.valid) valid += v;
    CHECK(valid == 1);
}

TEST_CASE("stored depth unprojects to the camera-frame point") {
    std::mt19937_64 rng(9);
    CameraModel cam = make_camera(80, 60);
    cam.extrinsics = RigidTransform::from_quaternion(random_quaternion(rng), Vec3(0.3, -0.2, 0.5));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<CalibratedPoint> pts;
    for (int i = 0; i < 300; ++i) {
        // sample in camera space, then express in the LiDAR frame
        const double z = 2.0 + 3.0 * (u(rng) + 1.0);
        const Vec3 cp(0.5 * z * u(rng), 0.35 * z * u(rng), z);
        CalibratedPoint p;
        p.position = cam.extrinsics.inverse() * cp;
        p.source_index = static_cast<std::size_t>(i);
        pts.push_back(p);
    }
    const ProjectedSweep s = project_to_camera(pts, cam);
    std::size_t checked = 0;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            if (!s.depth.is_valid(x, y)) continue;
            const Vec3 cp = cam.to_camera(pts[static_cast<std::size_t>(s.depth.point_index[s.depth.index(x, y)])].position);
            const Vec2 uv = *cam.project(cp);
            const Vec3 back = cam.unproject(uv.x(), uv.y(), s.depth.values[s.depth.index(x, y)]);
            CHECK((back - cp).norm() < 1e-6);
            CHECK((s.points[s.depth.index(x, y)] - cp).norm() < 1e-6);
            ++checked;
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("pixel reflectance gradient examples") {
    SparseImage img(5, 5);
    std::vector<Vec3> pts(25, Vec3::Zero());
    auto set = [&](int x, int y, double v, Vec3 p) {
        img.values[img.index(x, y)] = v;
        img.valid[img.index(x, y)] = 1;
        pts[img.index(x, y)] = p;
    };
    SUBCASE("single horizontal partner") {
        set(1, 1, 1.0, Vec3(0, 0, 0));
        set(2, 1, 0.0, Vec3(2, 0, 0));
        const SparseImage g = pixel_reflectance_gradient(img, pts);
        CHECK(g.values[g.index(1, 1)] == doctest::Approx(0.5));
    }
    SUBCASE("isolated pixel") {
        set(0, 0, 0.7, Vec3(0, 0, 1));
        set(4, 4, 0.1, Vec3(1, 1, 1));
        const SparseImage g = pixel_reflectance_gradient(img, pts);
        CHECK(g.values[g.index(0, 0)] == 0.0);
        CHECK(g.values[g.index(4, 4)] == 0.0);
    }
    SUBCASE("constant values") {
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int y = 0; y < 5; ++y) {
            for (int x = 0; x < 5; ++x) {
                if (u(rng) < 0.6) set(x, y, 0.42, Vec3(x, y, 3.0 + u(rng)));
            }
        }
        const SparseImage g = pixel_reflectance_gradient(img, pts);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            if (g.valid[i]) CHECK(g.values[i] == 0.0);
        }
    }
}

TEST_CASE("gradient partners are searched nearest first") {
    SparseImage img(7, 1);
    for (int x : {3, 1, 6}) img.valid[img.index(x, 0)] = 1;
    const auto n = gradient_neighbors(img, 2);
    CHECK(n[3].horizontal == 1);
    CHECK(n[1].horizontal == 3);
    CHECK(n[6].horizontal == -1);
    CHECK(n[3].vertical == -1);
}

TEST_CASE("occlusion filter drops far returns next to near ones") {
    ProjectedSweep s;
    s.depth = SparseImage(5, 1);
    s.reflectance = SparseImage(5, 1);
    s.points.assign(5, Vec3::Zero());
    const double depth[] = {2.0, 2.05, 6.0, 0.0, 6.1};
    for (int x = 0; x < 5; ++x) {
        if (depth[x] == 0.0) continue;
        s.depth.values[x] = depth[x];
        s.depth.valid[x] = s.reflectance.valid[x] = 1;
    }
    CHECK(remove_occluded(s, 1, 0.1) == 1);
    CHECK(s.depth.valid[0]);
    CHECK(s.depth.valid[1]);
    CHECK_FALSE(s.depth.valid[2]);
    CHECK_FALSE(s.reflectance.valid[2]);
    CHECK(s.depth.valid[4]);
    CHECK(remove_occluded(s, 0, 0.1) == 0);
}
