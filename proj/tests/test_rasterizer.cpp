#include "lrsgs/rasterizer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace lrsgs;
using namespace lrsgs::testing;

namespace {

GaussianPrimitive colored_blob(const Vec3& mean, double sigma, double opacity, const Vec3& rgb) {
    GaussianPrimitive g = GaussianPrimitive::non_salient(mean, Vec4(1, 0, 0, 0), Vec3::Constant(sigma));
    g.opacity_logit = opacity >= 1.0 ? 60.0 : logit(opacity);
    g.sh[0] = sh_dc_from_rgb(rgb);
    return g;
}

/// Weighted sum of every output channel; the weights act as dL/d(output).
double probe(const RenderedFrame& f, const RenderOutputGradient& w) {
    double s = 0.0;
    auto dot = [&](const Image& a, const Image& b) {
        for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
    };
    dot(f.color, w.color);
    dot(f.depth, w.depth);
    dot(f.reflectance, w.reflectance);
    dot(f.opacity, w.opacity);
    return s;
}

RenderOutputGradient random_output_weights(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RenderOutputGradient g{Image(w, h, 3), Image(w, h), Image(w, h), Image(w, h)};
    for (Image* img : {&g.color, &g.depth, &g.reflectance, &g.opacity}) {
        for (double& v : img->data()) v = u(rng);
    }
    for (double& v : g.depth.data()) v *= 0.2;
    return g;
}

} // namespace

TEST_CASE("single opaque splat clamps alpha at its center") {
    const CameraModel cam = make_camera(17, 17);
    const SkyModel sky(4, 8, Vec3(0.2, 0.4, 0.6));
    const std::vector<GaussianPrimitive> gs{colored_blob(Vec3(0, 0, 3), 0.2, 1.0, Vec3(1.0, 0.5, 0.0))};
    const RenderedFrame f = render(gs, cam, sky, 0);
    CHECK(f.opacity(8, 8) == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(f.color(8, 8, 0) == doctest::Approx(0.99 * 1.0 + 0.01 * 0.2).epsilon(1e-12));
    CHECK(f.color(8, 8, 1) == doctest::Approx(0.99 * 0.5 + 0.01 * 0.4).epsilon(1e-12));
    CHECK(f.depth(8, 8) == doctest::Approx(0.99 * 3.0).epsilon(1e-12));
}

TEST_CASE("two half-transparent splats blend front to back") {
    const CameraModel cam = make_camera(9, 9);
    const SkyModel sky(4, 8, Vec3::Zero());
    // Huge footprints make alpha at the center pixel equal the opacity.
    std::vector<GaussianPrimitive> gs{colored_blob(Vec3(0, 0, 4), 50.0, 0.5, Vec3(0, 1, 0)),
                                      colored_blob(Vec3(0, 0, 2), 50.0, 0.5, Vec3(1, 0, 0))};
    const RenderedFrame f = render(gs, cam, sky, 0);
    CHECK(f.color(4, 4, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(f.color(4, 4, 1) == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(f.opacity(4, 4) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("empty scene renders pure sky") {
    const CameraModel cam = make_camera(16, 12);
    std::mt19937_64 rng(3);
    const SkyModel sky = random_sky(rng);
    const RenderedFrame f = render({}, cam, sky, 2);
    const RenderedFrame o = render_oracle({}, cam, sky, 2);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 16; ++x) {
            const Vec3 s = sky.sample(cam.ray_direction(x, y));
            for (int c = 0; c < 3; ++c) CHECK(f.color(x, y, c) == s[c]);
            CHECK(f.opacity(x, y) == 0.0);
            CHECK(f.depth(x, y) == 0.0);
            CHECK(f.reflectance(x, y) == 0.0);
        }
    }
    CHECK(max_abs_diff(f.color, o.color) == 0.0);
}

TEST_CASE("projection culls behind the near plane and keeps isotropy on axis") {
    const CameraModel cam = make_camera(64, 64);
    CHECK_FALSE(project(colored_blob(Vec3(0, 0, -1), 0.1, 0.5, Vec3::Ones()), cam, 0));
    CHECK_FALSE(project(colored_blob(Vec3(0, 0, 0.1), 0.1, 0.5, Vec3::Ones()), cam, 0));
    const auto pg = project(colored_blob(Vec3(0, 0, cam.intrinsics.fx / 100.0), 0.1, 0.5, Vec3::Ones()), cam, 0);
    REQUIRE(pg);
    CHECK(pg->cov2d(0, 1) == doctest::Approx(0.0));
    CHECK(pg->cov2d(0, 0) == doctest::Approx(pg->cov2d(1, 1)));
}

TEST_CASE("doubling distance halves projected spread") {
    const CameraModel cam = make_camera(64, 64);
    const RenderOptions opt;
    const auto near = project(colored_blob(Vec3(0, 0, 5), 0.05, 0.5, Vec3::Ones()), cam, 0, opt);
    const auto far = project(colored_blob(Vec3(0, 0, 10), 0.05, 0.5, Vec3::Ones()), cam, 0, opt);
    REQUIRE(near);
    REQUIRE(far);
    const double s_near = std::sqrt(near->cov2d(0, 0) - opt.cov2d_floor);
    const double s_far = std::sqrt(far->cov2d(0, 0) - opt.cov2d_floor);
    CHECK(std::abs(s_far / s_near - 0.5) < 0.005);
}

TEST_CASE("tiled render matches the oracle on random scenes") {
    std::mt19937_64 rng(11);
    RenderOptions opt;
    opt.transmittance_cutoff = 0.0;
    for (int scene = 0; scene < 5; ++scene) {
        const auto gs = random_gaussians(rng, 120);
        const SkyModel sky = random_sky(rng);
        const CameraModel cam = make_camera(64, 64);
        const RenderedFrame a = render(gs, cam, sky, 2, opt);
        const RenderedFrame b = render_oracle(gs, cam, sky, 2, opt);
        CHECK(max_abs_diff(a.color, b.color) <= 1e-5);
        CHECK(max_abs_diff(a.depth, b.depth) <= 1e-5);
        CHECK(max_abs_diff(a.reflectance, b.reflectance) <= 1e-5);
        CHECK(max_abs_diff(a.opacity, b.opacity) <= 1e-5);
    }
}

TEST_CASE("oracle refuses oversized inputs") {
    std::vector<GaussianPrimitive> gs(kOracleMaxGaussians + 1);
    try {
        render_oracle(gs, make_camera(4, 4), SkyModel(), 0);
        FAIL("expected OracleTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OracleTooLarge);
    }
}

TEST_CASE("input order and thread count do not change the image") {
    std::mt19937_64 rng(5);
    auto gs = random_gaussians(rng, 150);
    const SkyModel sky = random_sky(rng);
    const CameraModel cam = make_camera(48, 40);
    const RenderedFrame a = render(gs, cam, sky, 2);
    std::reverse(gs.begin(), gs.end());
    RenderOptions threaded;
    threaded.threads = 4;
    const RenderedFrame b = render(gs, cam, sky, 2, threaded);
    CHECK(max_abs_diff(a.color, b.color) <= 1e-7);
    CHECK(max_abs_diff(a.depth, b.depth) <= 1e-7);
    CHECK(max_abs_diff(a.opacity, b.opacity) <= 1e-7);
}

TEST_CASE("opacity stays in the unit interval") {
    std::mt19937_64 rng(8);
    for (auto& g : std::vector<int>(3)) {
        (void)g;
        auto gs = random_gaussians(rng, 200);
        for (auto& p : gs) p.opacity_logit += 4.0;
        const RenderedFrame f = render(gs, make_camera(32, 32), SkyModel(), 2);
        for (double o : f.opacity.data()) {
            CHECK(o >= 0.0);
            CHECK(o <= 1.0);
        }
    }
}

TEST_CASE("backward pass matches central differences for every attribute") {
    std::mt19937_64 rng(21);
    const int w = 24, h = 20;
    const CameraModel cam = make_camera(w, h);
    const RenderOptions opt = exact_options();

    SceneGraph scene;
    scene.sh_degree = 2;
    scene.frame_count = 1;
    scene.sky = random_sky(rng, 4, 8);
    scene.background = random_gaussians(rng, 6);
    RigidObject obj;
    obj.gaussians = random_gaussians(rng, 3);
    for (auto& g : obj.gaussians) g.mean -= Vec3(0, 0, 1.5);
    obj.poses = {ObjectPose{random_quaternion(rng), Vec3(0.1, -0.1, 1.5)}};
    obj.poses[0].rotation = normalize_quaternion(Vec4(1.0, 0.1, -0.2, 0.05));
    scene.objects.push_back(obj);

    const RenderOutputGradient weights = random_output_weights(rng, w, h);
    auto objective = [&](const SceneGraph& s) {
        return probe(render(world_gaussians(s, 0), cam, s.sky, s.sh_degree, opt), weights);
    };

    std::vector<GaussianSource> sources;
    const auto world = world_gaussians(scene, 0, &sources);
    const RenderPass pass = render_forward(world, cam, scene.sky, scene.sh_degree, opt);
    const RenderGradient rg = render_backward(pass, world, scene.sky, weights);
    SceneGradient grad = SceneGradient::zeros_like(scene);
    accumulate_scene_gradient(scene, 0, sources, rg.gaussians, rg.sky, grad);

    std::vector<std::pair<ParamGroup, double>> analytic;
    visit_parameters(scene, grad, [&](ParamGroup g, double&, double& d) { analytic.emplace_back(g, d); });

    const double step = 1e-4;
    std::array<double, kParamGroupCount> worst{};
    std::size_t index = 0, checked = 0;
    SceneGraph probe_scene = scene;
    SceneGradient dummy = SceneGradient::zeros_like(scene);
    std::vector<double*> params;
    visit_parameters(probe_scene, dummy, [&](ParamGroup, double& p, double&) { params.push_back(&p); });
    for (double* p : params) {
        const double orig = *p;
        *p = orig + step;
        const double up = objective(probe_scene);
        *p = orig - step;
        const double down = objective(probe_scene);
        *p = orig;
        const double numeric = (up - down) / (2.0 * step);
        const auto [group, a] = analytic[index++];
        if (std::abs(a) > 1e-6) {
            auto& slot = worst[static_cast<int>(group)];
            slot = std::max(slot, relative_error(a, numeric));
            ++checked;
        }
    }
    CHECK(checked > 200);
    for (int g = 0; g < kParamGroupCount; ++g) {
        INFO("group " << to_string(static_cast<ParamGroup>(g)));
        CHECK(worst[g] <= 1e-4);
    }
}

TEST_CASE("backward pass is deterministic across thread counts") {
    std::mt19937_64 rng(2);
    const auto gs = random_gaussians(rng, 80);
    const SkyModel sky = random_sky(rng);
    const CameraModel cam = make_camera(40, 36);
    const RenderOutputGradient weights = random_output_weights(rng, 40, 36);
    RenderOptions one, four;
    four.threads = 4;
    const auto a = render_backward(render_forward(gs, cam, sky, 2, one), gs, sky, weights);
    const auto b = render_backward(render_forward(gs, cam, sky, 2, four), gs, sky, weights);
    double worst = 0.0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        worst = std::max(worst, (a.gaussians[i].mean - b.gaussians[i].mean).cwiseAbs().maxCoeff());
        worst = std::max(worst, (a.gaussians[i].covariance - b.gaussians[i].covariance).cwiseAbs().maxCoeff());
        worst = std::max(worst, std::abs(a.gaussians[i].opacity_logit - b.gaussians[i].opacity_logit));
    }
    CHECK(worst <= 1e-7);
}
