#include "lrsgs/optimizer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <limits>

using namespace lrsgs;
using namespace lrsgs::testing;

namespace {

LossWeights no_reflectance(LossWeights w) {
    w.reflectance = w.reflectance_gradient = w.direction = w.magnitude = 0.0;
    return w;
}

std::vector<double> flatten(SceneGraph scene) {
    std::vector<double> out;
    SceneGradient g = SceneGradient::zeros_like(scene);
    visit_parameters(scene, g, [&](ParamGroup, double& p, double&) { out.push_back(p); });
    return out;
}

bool quaternions_unit(const SceneGraph& s) {
    auto ok = [](const GaussianPrimitive& g) { return std::abs(g.rotation.norm() - 1.0) <= 1e-9; };
    for (const auto& g : s.background) {
        if (!ok(g)) return false;
    }
    for (const auto& o : s.objects) {
        for (const auto& g : o.gaussians) {
            if (!ok(g)) return false;
        }
        for (const auto& p : o.poses) {
            if (std::abs(p.rotation.norm() - 1.0) > 1e-9) return false;
        }
    }
    return true;
}

/// Minimal prepared data wrapping one small problem: one training and one held-out view.
PreparedData small_data(std::uint64_t seed) {
    SmallProblem p = small_problem(seed, 16, 24, 20);
    PreparedData d;
    d.cameras = {p.camera};
    d.train = {p.view};
    d.test = {p.view};
    d.scene = p.scene;
    return d;
}

} // namespace

TEST_CASE("analytic gradients agree with central differences for every group") {
    SmallProblem p = small_problem(1, 20, 20, 16);
    offset_targets(p, 101);
    const GradientCheckReport r = check_gradients(p.scene, p.view, p.camera, LossWeights{});
    for (int g = 0; g < kParamGroupCount; ++g) {
        INFO(std::string(to_string(static_cast<ParamGroup>(g))));
        CHECK(r.groups[static_cast<std::size_t>(g)].checked > 0);
        CHECK(r.groups[static_cast<std::size_t>(g)].max_relative_error <= 1e-4);
    }
}

TEST_CASE("reflectance gradient vanishes without reflectance terms") {
    const SmallProblem p = small_problem(2, 12, 16, 12);
    RenderOptions opts = exact_options();
    const ViewGradient vg = view_gradient(p.scene, p.view, p.camera, no_reflectance(LossWeights{}), opts);
    for (const auto& g : vg.grad.background) CHECK(g.reflectance_logit == 0.0);
    for (const auto& g : vg.grad.objects[0]) CHECK(g.reflectance_logit == 0.0);

    const ViewGradient full = view_gradient(p.scene, p.view, p.camera, LossWeights{}, opts);
    bool any = false;
    for (const auto& g : full.grad.background) any = any || g.reflectance_logit != 0.0;
    CHECK(any);
}

TEST_CASE("matching render gives zero loss and zero gradient") {
    SmallProblem p = small_problem(3, 12, 16, 12);
    const RenderOptions opts = exact_options();
    p.view.rgb = render(world_gaussians(p.scene, 1), p.camera, p.scene.sky, p.scene.sh_degree, opts).color;
    LossWeights w;
    w.depth = w.reflectance = w.reflectance_gradient = w.direction = w.magnitude = 0.0;
    const ViewGradient vg = view_gradient(p.scene, p.view, p.camera, w, opts);
    CHECK(vg.terms.total <= 1e-12);
    SceneGraph s = p.scene;
    SceneGradient g = vg.grad;
    double worst = 0.0;
    visit_parameters(s, g, [&](ParamGroup, double&, double& d) { worst = std::max(worst, std::abs(d)); });
    CHECK(worst < 1e-10);
}

TEST_CASE("loss decreases over fixed-view steps and quaternions stay unit") {
    SmallProblem p = small_problem(4, 10, 24, 20);
    AdamOptimizer adam(LearningRates{}, 50);
    const RenderOptions opts;
    double first = 0.0, last = 0.0;
    for (int it = 0; it < 50; ++it) {
        const LossReport r = train_step(p.scene, p.view, p.camera, LossWeights{}, adam, it, opts);
        if (it == 0) first = r.terms.total;
        last = r.terms.total;
        REQUIRE(quaternions_unit(p.scene));
    }
    CHECK(last < first);
}

TEST_CASE("a NaN in the target aborts the step without touching parameters") {
    SmallProblem p = small_problem(5, 10, 16, 12);
    AdamOptimizer adam(LearningRates{}, 10);
    train_step(p.scene, p.view, p.camera, LossWeights{}, adam, 0);
    const std::vector<double> before = flatten(p.scene);
    p.view.rgb(3, 4, 1) = std::numeric_limits<double>::quiet_NaN();
    try {
        train_step(p.scene, p.view, p.camera, LossWeights{}, adam, 1);
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteLoss);
        CHECK(std::string(e.what()).find("rgb") != std::string::npos);
    }
    const std::vector<double> after = flatten(p.scene);
    CHECK(before == after);
}

TEST_CASE("RGB-only weights reduce the loss to the color term") {
    SmallProblem p = small_problem(6, 10, 16, 12);
    LossWeights w = no_reflectance(LossWeights{});
    w.depth = 0.0;
    AdamOptimizer adam(LearningRates{}, 5);
    for (int it = 0; it < 5; ++it) {
        const LossReport r = train_step(p.scene, p.view, p.camera, w, adam, it);
        CHECK(r.terms.lidar == 0.0);
        CHECK(r.terms.joint == 0.0);
        CHECK(r.terms.total == r.terms.rgb);
    }
}

TEST_CASE("learning-rate schedule and config validation") {
    AdamOptimizer adam(LearningRates{}, 1000);
    CHECK(adam.mean_rate(0) == doctest::Approx(1.6e-4));
    CHECK(adam.mean_rate(1000) == doctest::Approx(1.6e-6));
    CHECK(adam.mean_rate(500) == doctest::Approx(1.6e-5));

    TrainConfig c;
    CHECK(c.densify_stop() == 3500);
    c.lr.sh = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = TrainConfig{};
    c.densify_start = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    // the window is clipped to the run rather than rejected
    c = TrainConfig{};
    c.iterations = 200;
    CHECK_NOTHROW(c.validate());
    CHECK(c.densify_stop() == 100);
    c.densify_end = 5000;
    CHECK(c.densify_stop() == 200);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const PreparedData d = small_data(7);
    TrainConfig c;
    c.iterations = 30;
    c.densify_start = 5;
    c.densify_end = 25;
    c.eval_interval = 10;
    c.checkpoint_interval = 0;
    c.seed = 3;
    DensifyConfig dc;
    dc.interval = 10;
    const TrainResult a = train(d.scene, d, c, LossWeights{}, dc);
    const TrainResult b = train(d.scene, d, c, LossWeights{}, dc);
    REQUIRE(a.evaluations.size() == b.evaluations.size());
    REQUIRE(a.evaluations.size() == 3);
    for (std::size_t i = 0; i < a.evaluations.size(); ++i) {
        CHECK(std::abs(a.evaluations[i].psnr - b.evaluations[i].psnr) <= 1e-6);
        CHECK(std::abs(a.evaluations[i].reflectance_rmse - b.evaluations[i].reflectance_rmse) <= 1e-6);
        CHECK(a.evaluations[i].gaussians == b.evaluations[i].gaussians);
    }
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(std::abs(a.history[i].terms.total - b.history[i].terms.total) <= 1e-6);
    }
}

TEST_CASE("an empty densify window keeps the primitive count") {
    const PreparedData d = small_data(8);
    TrainConfig c;
    c.iterations = 40;
    c.densify_start = 0;
    c.densify_end = 0;
    c.eval_interval = 0;
    c.checkpoint_interval = 0;
    DensifyConfig dc;
    dc.interval = 5;
    dc.grad_threshold = 1e-12;
    TrainCallbacks cb;
    std::size_t expected = d.scene.gaussian_count();
    bool constant = true;
    cb.progress = [&](const LossReport& r) { constant = constant && r.gaussians == expected; };
    const TrainResult r = train(d.scene, d, c, LossWeights{}, dc, cb);
    CHECK(constant);
    CHECK(r.scene.gaussian_count() == expected);
    CHECK(r.mutations.events.empty());
}

TEST_CASE("checkpoints are offered at the configured interval") {
    const PreparedData d = small_data(9);
    TrainConfig c;
    c.iterations = 25;
    c.densify_end = 0;
    c.eval_interval = 0;
    c.checkpoint_interval = 10;
    std::vector<int> seen;
    TrainCallbacks cb;
    cb.checkpoint = [&](int it, const SceneGraph&) { seen.push_back(it); };
    const TrainResult r = train(d.scene, d, c, LossWeights{}, DensifyConfig{}, cb);
    CHECK(seen == std::vector<int>{10, 20});
    REQUIRE(r.evaluations.size() == 1);
    CHECK(r.evaluations[0].iteration == 25);
}
