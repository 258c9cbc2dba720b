#include "lrsgs/dataset.hpp"
#include "lrsgs/synth_data.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <unistd.h>

using namespace lrsgs;
using namespace lrsgs::testing;

namespace {

/// One frame, sensor at the origin, a 10 x 10 m wall on the plane x = distance facing it.
SynthScene wall_scene(double distance, ReflectanceBands bands, int rings = 3, int per_ring = 360) {
    SynthScene scene;
    SynthSurface wall;
    wall.origin = Vec3(distance, -5.0, -5.0);
    wall.axis_u = Vec3::UnitY();
    wall.axis_v = Vec3::UnitZ();
    wall.extent_u = wall.extent_v = 10.0;
    wall.reflectance = bands;
    scene.surfaces.push_back(wall);
    scene.lidar.ring_count = rings;
    scene.lidar.points_per_ring = per_ring;
    scene.lidar.elevation_min = -10.0;
    scene.lidar.elevation_max = 10.0;
    scene.lidar.sensor_poses = {RigidTransform::identity()};
    scene.validate();
    return scene;
}

SynthScene tiny_standard() {
    StandardSceneOptions o;
    o.width = 24;
    o.height = 18;
    o.frame_count = 2;
    SynthScene s = standard_scene(3, o);
    s.lidar.points_per_ring = 256;
    return s;
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("lrsgs_synth_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("head-on wall returns rho / R^2") {
    for (auto [distance, expected] : {std::pair{2.0, 0.2}, std::pair{4.0, 0.05}}) {
        const auto sweep = simulate_sweep(wall_scene(distance, ReflectanceBands::uniform(0.8)), 0);
        const auto it = std::find_if(sweep.begin(), sweep.end(),
                                     [](const LidarPoint& p) { return p.ring == 1 && p.azimuth_index == 0; });
        REQUIRE(it != sweep.end());
        CHECK(it->intensity == doctest::Approx(expected).epsilon(1e-12));
        CHECK(it->position.x() == doctest::Approx(distance).epsilon(1e-12));
    }
}

TEST_CASE("every noiseless return follows the forward model") {
    const auto sweep = simulate_sweep(wall_scene(3.0, ReflectanceBands::uniform(0.6)), 0);
    REQUIRE(!sweep.empty());
    for (const auto& p : sweep) {
        const double r = p.position.norm();
        const double cos_inc = p.position.x() / r;
        CHECK(p.intensity == doctest::Approx(0.6 * cos_inc / (r * r)).epsilon(1e-12));
        CHECK(p.position.x() == doctest::Approx(3.0).epsilon(1e-12));
    }
    // azimuths beyond +-90 degrees see nothing
    CHECK(sweep.size() < static_cast<std::size_t>(3 * 360 / 2 + 3));
}

TEST_CASE("noise streams are seeded") {
    const SynthScene scene = wall_scene(3.0, ReflectanceBands::uniform(0.6));
    const SweepNoise a{0.001, 0.01, 7};
    const auto s1 = simulate_sweep(scene, 0, a);
    const auto s2 = simulate_sweep(scene, 0, a);
    const auto s3 = simulate_sweep(scene, 0, {0.001, 0.01, 8});
    REQUIRE(s1.size() == s2.size());
    bool differs = false;
    for (std::size_t i = 0; i < s1.size(); ++i) {
        CHECK(s1[i].position == s2[i].position);
        CHECK(s1[i].intensity == s2[i].intensity);
        differs = differs || s1[i].position != s3[i].position;
    }
    CHECK(differs);
    CHECK_THROWS_AS(simulate_sweep(scene, 1), Error);
}

TEST_CASE("calibrating a simulated two-band wall recovers the band ratio") {
    // boundary at y = 0
    const SynthScene scene = wall_scene(3.0, {0.3, 0.9, 5.0}, 16, 720);
    const auto sweep = simulate_sweep(scene, 0);
    const auto cal = calibrate_sweep(sweep);
    double low_sum = 0.0, high_sum = 0.0;
    int low_n = 0, high_n = 0;
    std::vector<double> lows, highs;
    for (const auto& p : cal.points) {
        if (std::abs(p.position.y()) < 0.1) continue;
        if (std::abs(p.position.z()) > 0.4 || std::abs(p.position.y()) > 1.2) continue;
        (p.position.y() < 0.0 ? lows : highs).push_back(p.reflectance);
    }
    REQUIRE(lows.size() > 20);
    REQUIRE(highs.size() > 20);
    for (double v : lows) {
        low_sum += v;
        ++low_n;
    }
    for (double v : highs) {
        high_sum += v;
        ++high_n;
    }
    const double low = low_sum / low_n, high = high_sum / high_n;
    CHECK(low / high == doctest::Approx(0.3 / 0.9).epsilon(0.02));
    for (double v : lows) CHECK(v / high == doctest::Approx(0.3 / 0.9).epsilon(0.02));
}

TEST_CASE("uniform wall renders a constant image") {
    SynthScene scene = wall_scene(2.0, ReflectanceBands::uniform(0.5));
    scene.surfaces[0].albedo = {Vec3(0.9, 0.1, 0.1), Vec3(0.9, 0.1, 0.1), 0.5};
    scene.ambient = 1.0;
    scene.diffuse = 0.0;
    CameraModel cam = look_at(Vec3::Zero(), Vec3(1, 0, 0), 16, 12, 60.0);
    const Image img = render_gt(scene, cam, 0, 2);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 16; ++x) {
            CHECK(img(x, y, 0) == doctest::Approx(0.9).epsilon(1e-12));
            CHECK(img(x, y, 1) == doctest::Approx(0.1).epsilon(1e-12));
        }
    }
}

TEST_CASE("empty scene renders the sky") {
    SynthScene scene;
    scene.lidar.sensor_poses = {RigidTransform::identity()};
    scene.sky_horizon = scene.sky_zenith = Vec3(0.2, 0.4, 0.6);
    const Image img = render_gt(scene, look_at(Vec3::Zero(), Vec3(1, 0, 0.3), 8, 6, 60.0), 0);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 8; ++x) {
            for (int c = 0; c < 3; ++c) CHECK(img(x, y, c) == doctest::Approx(scene.sky_horizon[c]).epsilon(1e-12));
        }
    }
    const Image refl = render_gt_reflectance(scene, look_at(Vec3::Zero(), Vec3(1, 0, 0), 8, 6, 60.0), 0);
    CHECK(std::ranges::all_of(refl.data(), [](double v) { return v == 0.0; }));
}

TEST_CASE("checker edges land where the plane projection puts them") {
    SynthScene scene = wall_scene(3.0, ReflectanceBands::uniform(0.5));
    const Vec3 a(1.0, 1.0, 1.0), b(0.0, 0.0, 0.0);
    scene.surfaces[0].albedo = {a, b, 0.8};
    scene.ambient = 1.0;
    scene.diffuse = 0.0;
    const CameraModel cam = look_at(Vec3(0.0, 0.3, 0.2), Vec3(3.0, -0.5, -0.1), 64, 48, 70.0);
    const Image img = render_gt(scene, cam, 0, 4);

    // independent oracle: intersect each pixel ray with x = 3 and evaluate the checker parity
    const Mat3 rot_inv = cam.extrinsics.rotation.transpose();
    const Vec3 center = -rot_inv * cam.extrinsics.translation;
    auto white_at = [&](double u, double v) {
        const Vec3 d_cam((u - cam.intrinsics.cx) / cam.intrinsics.fx, (v - cam.intrinsics.cy) / cam.intrinsics.fy, 1.0);
        const Vec3 d = rot_inv * d_cam;
        const double t = (3.0 - center.x()) / d.x();
        const Vec3 p = center + t * d;
        const auto iu = static_cast<long long>(std::floor((p.y() + 5.0) / 0.8));
        const auto iv = static_cast<long long>(std::floor((p.z() + 5.0) / 0.8));
        return ((iu + iv) & 1) == 0;
    };
    int checked = 0;
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 64; ++x) {
            const bool w = white_at(x, y);
            bool near_edge = false;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) near_edge = near_edge || white_at(x + dx, y + dy) != w;
            }
            if (near_edge) continue;
            ++checked;
            CHECK(img(x, y, 0) == doctest::Approx(w ? 1.0 : 0.0).epsilon(1e-12));
        }
    }
    CHECK(checked > 64 * 48 / 2);
}

TEST_CASE("standard scene is deterministic and well formed") {
    const SynthScene a = standard_scene(11), b = standard_scene(11), c = standard_scene(12);
    REQUIRE(a.surfaces.size() == b.surfaces.size());
    CHECK(a.cameras.size() == 10);
    CHECK(std::ranges::count(a.held_out, true) == 2);
    CHECK(a.frame_count == 20);
    CHECK(a.lidar.ring_count == 16);
    CHECK(a.objects.size() == 1);
    for (std::size_t i = 0; i < a.cameras.size(); ++i) {
        CHECK(a.cameras[i].extrinsics.rotation == b.cameras[i].extrinsics.rotation);
        CHECK(a.cameras[i].extrinsics.translation == b.cameras[i].extrinsics.translation);
    }
    CHECK(a.objects[0].trajectory[0].translation == b.objects[0].trajectory[0].translation);
    CHECK(a.objects[0].trajectory[0].translation != c.objects[0].trajectory[0].translation);
    const Image ia = render_gt(a, a.cameras[0], 3), ib = render_gt(b, b.cameras[0], 3);
    CHECK(std::ranges::equal(ia.data(), ib.data()));
}

TEST_CASE("the reflectance band is invisible in RGB") {
    const SynthScene scene = standard_scene(1);
    SynthScene flat = scene;
    bool found = false;
    for (auto& s : flat.surfaces) {
        if (s.reflectance.split < 1e9) {
            s.reflectance = ReflectanceBands::uniform(s.reflectance.low);
            found = true;
        }
    }
    REQUIRE(found);
    bool reflectance_differs = false;
    for (std::size_t c = 0; c < scene.cameras.size(); c += 3) {
        const Image a = render_gt(scene, scene.cameras[c], 0, 2), b = render_gt(flat, flat.cameras[c], 0, 2);
        CHECK(std::ranges::equal(a.data(), b.data()));
        const Image ra = render_gt_reflectance(scene, scene.cameras[c], 0);
        const Image rb = render_gt_reflectance(flat, flat.cameras[c], 0);
        reflectance_differs = reflectance_differs || !std::ranges::equal(ra.data(), rb.data());
    }
    CHECK(reflectance_differs);
}

TEST_CASE("object hits stay on the box surface in its own frame") {
    const SynthScene scene = standard_scene(2);
    const SynthObject& box = scene.objects[0];
    for (int f : {0, 9, 19}) {
        int on_box = 0;
        for (const auto& p : simulate_sweep(scene, f)) {
            const Vec3 world = scene.lidar.sensor_poses[static_cast<std::size_t>(f)] * p.position;
            const Vec3 local = box.trajectory[static_cast<std::size_t>(f)].inverse() * world;
            const Vec3 ratio = local.cwiseAbs().cwiseQuotient(box.half_extents);
            if (ratio.maxCoeff() > 1.0 + 1e-6) continue;
            ++on_box;
            CHECK(ratio.maxCoeff() == doctest::Approx(1.0).epsilon(1e-9));
        }
        CHECK(on_box > 10);
    }
}

TEST_CASE("albedo coupling keeps reflectance in range") {
    SynthSurface s;
    s.albedo = {Vec3(1.0, 1.0, 1.0), Vec3(0.1, 0.1, 0.1), 0.5};
    s.reflectance = ReflectanceBands::uniform(0.9);
    s.albedo_coupling = 1.0;
    CHECK(s.reflectance_at(0.1, 0.1) == doctest::Approx(1.0));
    CHECK(s.reflectance_at(0.6, 0.1) == doctest::Approx(0.9 * 0.1 / 0.55).epsilon(1e-12));
    s.albedo_coupling = 0.0;
    CHECK(s.reflectance_at(0.6, 0.1) == 0.9);

    SynthScene scene = wall_scene(2.0, ReflectanceBands::uniform(0.5));
    scene.surfaces[0].albedo_coupling = 1.5;
    CHECK_THROWS_AS(scene.validate(), Error);
    scene.surfaces[0].albedo_coupling = 0.0;
    scene.surfaces[0].reflectance.high = 1.2;
    CHECK_THROWS_AS(scene.validate(), Error);
}

TEST_CASE("dataset directory round-trip") {
    TempDir tmp;
    const SynthScene scene = tiny_standard();
    SynthesisOptions opts;
    opts.samples = 1;
    const Dataset d = synthesize(scene, opts);
    write_dataset(tmp.path, d);
    CHECK(fs::exists(tmp.path / "manifest.json"));
    CHECK(fs::exists(tmp.path / "frames" / "000" / "sweep.ply"));
    CHECK(fs::exists(tmp.path / "frames" / "001" / "cam_0.png"));
    const Dataset back = read_dataset(tmp.path);
    CHECK(back.frame_count == 2);
    REQUIRE(back.cameras.size() == d.cameras.size());
    for (std::size_t c = 0; c < d.cameras.size(); ++c) {
        CHECK(back.cameras[c].name == d.cameras[c].name);
        CHECK(back.cameras[c].held_out == d.cameras[c].held_out);
        CHECK((back.cameras[c].model.extrinsics.rotation - d.cameras[c].model.extrinsics.rotation).norm() < 1e-12);
    }
    REQUIRE(back.objects.size() == 1);
    CHECK((back.objects[0].poses[1].translation - d.objects[0].poses[1].translation).norm() < 1e-12);
    for (int f = 0; f < 2; ++f) {
        const auto& s0 = d.sweeps[static_cast<std::size_t>(f)];
        const auto& s1 = back.sweeps[static_cast<std::size_t>(f)];
        REQUIRE(s0.size() == s1.size());
        for (std::size_t i = 0; i < s0.size(); ++i) {
            CHECK((s0[i].position - s1[i].position).norm() < 1e-5);
            CHECK(s0[i].ring == s1[i].ring);
        }
        for (std::size_t c = 0; c < d.cameras.size(); ++c) {
            CHECK(max_abs_diff(d.images[static_cast<std::size_t>(f)][c], back.images[static_cast<std::size_t>(f)][c]) <=
                  0.5 / 255.0 + 1e-12);
        }
    }
}

TEST_CASE("reading a dataset without a manifest fails cleanly") {
    TempDir tmp;
    CHECK_THROWS_AS(read_dataset(tmp.path / "nowhere"), Error);
    write_text(tmp.path / "manifest.json", "{\"frames\": ");
    try {
        read_dataset(tmp.path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Format);
    }
}
