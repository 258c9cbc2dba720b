#include "lrsgs/losses.hpp"
#include "support.hpp"

#include <doctest.h>

#include <functional>

using namespace lrsgs;
using namespace lrsgs::testing;

namespace {

// Smooth deterministic test pair; reference values below come from scikit-image / scipy on the same formulas.
Image pattern_a(int w, int h) {
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img(x, y, c) = 0.5 + 0.4 * std::sin(0.37 * x + 0.23 * y + c);
    return img;
}

Image pattern_b(int w, int h) {
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img(x, y, c) = 0.5 + 0.3 * std::sin(0.37 * x + 0.23 * y + c) + 0.15 * std::cos(1.3 * x - 0.7 * y + 2 * c);
    return img;
}

Image random_image(std::mt19937_64& rng, int w, int h, int c, double lo = 0.05, double hi = 0.95) {
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(w, h, c);
    for (double& v : img.data()) v = u(rng);
    return img;
}

/// Worst relative error of `analytic` against central differences of `f` over every entry of `x`.
double fd_worst(Image& x, const Image& analytic, const std::function<double()>& f, double step = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + step;
        const double up = f();
        x.data()[i] = orig - step;
        const double down = f();
        x.data()[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic.data()[i];
        if (std::abs(a) > 1e-6) worst = std::max(worst, relative_error(a, numeric));
    }
    return worst;
}

LidarTargets random_targets(std::mt19937_64& rng, int w, int h, const Intrinsics& intr) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProjectedSweep sweep{SparseImage(w, h), SparseImage(w, h), std::vector<Vec3>(static_cast<std::size_t>(w) * h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (u(rng) < 0.45) continue;
            const double z = 2.0 + 3.0 * u(rng);
            sweep.depth.set(x, y, z);
            sweep.reflectance.set(x, y, 0.1 + 0.8 * u(rng));
            sweep.points[sweep.depth.index(x, y)] = Vec3((x - intr.cx) / intr.fx * z, (y - intr.cy) / intr.fy * z, z);
        }
    }
    return make_lidar_targets(sweep);
}

} // namespace

TEST_CASE("ssim of identical images is one") {
    const Image a = pattern_a(23, 19);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim and color loss match the reference implementation") {
    const Image a = pattern_a(23, 19), b = pattern_b(23, 19);
    CHECK(std::abs(ssim(a, b) - 0.7265542297233725) < 1e-9);
    CHECK(std::abs(ssim(a.channel(0), b.channel(0)) - 0.7124547669554109) < 1e-9);
    CHECK(std::abs(color_loss(a, b, 0.2) - 0.11245033409010914) < 1e-9);
    CHECK(std::abs(psnr(a, b) - 17.890246276905692) < 1e-9);
}

TEST_CASE("color loss examples") {
    const Image a(16, 16, 3, 0.4), b(16, 16, 3, 0.5);
    CHECK(color_loss(a, a, 0.2) == doctest::Approx(0.0));
    CHECK(color_loss(a, b, 0.0) == doctest::Approx(0.1).epsilon(1e-12));
    try {
        color_loss(a, Image(15, 16, 3), 0.2);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
}

TEST_CASE("psnr examples") {
    const Image a(12, 12, 3, 0.3), b(12, 12, 3, 0.4);
    CHECK(psnr(a, a) == 99.0);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    SparseImage refl(12, 12);
    refl.set(3, 3, 0.5);
    const Metrics m = metrics(a, a, Image(12, 12, 1, 0.5), refl);
    CHECK(m.psnr == 99.0);
    CHECK(m.ssim == doctest::Approx(1.0));
    CHECK(m.reflectance_rmse == 0.0);
}

TEST_CASE("color loss gradient matches central differences") {
    std::mt19937_64 rng(4);
    Image r = random_image(rng, 16, 14, 3);
    const Image gt = random_image(rng, 16, 14, 3);
    Image grad;
    color_loss(r, gt, 0.2, &grad);
    CHECK(fd_worst(r, grad, [&] { return color_loss(r, gt, 0.2); }) <= 1e-4);
}

TEST_CASE("joint loss matches an independent filter implementation") {
    const Image rgb = pattern_a(23, 19);
    const Image refl = pattern_b(23, 19).channel(0);
    const JointLossTerms j = joint_loss(rgb, refl, LossWeights{});
    CHECK(std::abs(j.direction - 0.5814424870920137) < 1e-9);
    CHECK(std::abs(j.magnitude - 0.0904090121037785) < 1e-9);
    CHECK(std::abs(j.total - 0.07622605112995708) < 1e-9);
}

TEST_CASE("joint loss examples") {
    const Image rgb = pattern_a(20, 20);
    const Image gray = grayscale(rgb);
    const JointLossTerms same = joint_loss(rgb, gray, LossWeights{});
    CHECK(same.direction == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(same.magnitude == doctest::Approx(0.0).epsilon(1e-12));

    Image scaled = gray;
    for (double& v : scaled.data()) v *= 0.5;
    const JointLossTerms k = joint_loss(rgb, scaled, LossWeights{});
    CHECK(k.direction < 1e-12);
    CHECK(k.magnitude < 5e-3);

    Image horiz(20, 20, 1), vert(20, 20, 3);
    for (int y = 0; y < 20; ++y) {
        for (int x = 0; x < 20; ++x) {
            horiz(x, y) = 0.05 * x;
            for (int c = 0; c < 3; ++c) vert(x, y, c) = 0.05 * y;
        }
    }
    CHECK(joint_loss(vert, horiz, LossWeights{}).direction == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("joint direction term ignores affine intensity changes") {
    // Only inputs whose gradient magnitudes stay clear of the exclusion threshold under the rescaling qualify.
    auto near_threshold = [](const Image& img) {
        const auto k = gaussian_kernel(kJointSigma);
        Image gx, gy;
        scharr(filter_mirrored(img, k, k), gx, gy);
        for (std::size_t i = 0; i < gx.data().size(); ++i) {
            const double m = std::hypot(gx.data()[i], gy.data()[i]);
            if (m > 0.3 * kDirectionMinMagnitude && m < 2.5 * kDirectionMinMagnitude) return true;
        }
        return false;
    };
    int evaluated = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        std::mt19937_64 rng(seed);
        const Image rgb = random_image(rng, 18, 18, 3);
        const Image refl = random_image(rng, 18, 18, 1);
        if (near_threshold(refl) || near_threshold(grayscale(rgb))) continue;
        Image refl2 = refl, rgb2 = rgb;
        for (double& v : refl2.data()) v = 2.5 * v + 0.3;
        for (double& v : rgb2.data()) v = 0.5 * v + 0.1;
        const double a = joint_loss(rgb, refl, LossWeights{}).direction;
        CHECK(joint_loss(rgb, refl2, LossWeights{}).direction == doctest::Approx(a).epsilon(1e-10));
        CHECK(joint_loss(rgb2, refl, LossWeights{}).direction == doctest::Approx(a).epsilon(1e-10));
        ++evaluated;
    }
    CHECK(evaluated >= 5);
}

TEST_CASE("joint loss gradients match central differences") {
    std::mt19937_64 rng(12);
    Image rgb = random_image(rng, 14, 12, 3);
    Image refl = random_image(rng, 14, 12, 1);
    const LossWeights w;
    Image g_rgb, g_refl;
    joint_loss(rgb, refl, w, &g_rgb, &g_refl);
    auto f = [&] { return joint_loss(rgb, refl, w).total; };
    CHECK(fd_worst(rgb, g_rgb, f) <= 1e-4);
    CHECK(fd_worst(refl, g_refl, f) <= 1e-4);
}

TEST_CASE("lidar loss examples") {
    const CameraModel cam = make_camera(10, 8);
    SparseImage depth(10, 8), refl(10, 8);
    depth.set(2, 2, 3.0);
    depth.set(5, 4, 4.0);
    refl.set(2, 2, 0.4);
    refl.set(5, 4, 0.6);
    ProjectedSweep sweep{refl, depth, std::vector<Vec3>(80, Vec3(0, 0, 1))};
    const LidarTargets t = make_lidar_targets(sweep);

    Image d(10, 8), f(10, 8);
    d(2, 2) = 3.0;
    d(5, 4) = 4.0;
    f(2, 2) = 0.4;
    f(5, 4) = 0.6;
    const LossWeights w;
    CHECK(lidar_loss(d, f, t, cam.intrinsics, w).total == 0.0);

    Image shifted = d;
    shifted(2, 2) += 0.5;
    shifted(5, 4) += 0.5;
    LossWeights only_depth{0.2, 0.1, 0.0, 0.0, 0.0, 0.0};
    CHECK(lidar_loss(shifted, f, t, cam.intrinsics, only_depth).total == doctest::Approx(0.05).epsilon(1e-12));

    const LidarTargets empty = make_lidar_targets(ProjectedSweep{SparseImage(10, 8), SparseImage(10, 8), std::vector<Vec3>(80)});
    const LidarLossTerms e = lidar_loss(d, f, empty, cam.intrinsics, w);
    CHECK(e.total == 0.0);
    CHECK(e.empty_mask);
}

TEST_CASE("lidar loss ignores pixels outside the mask") {
    std::mt19937_64 rng(30);
    const CameraModel cam = make_camera(16, 12);
    const LidarTargets t = random_targets(rng, 16, 12, cam.intrinsics);
    Image d = random_image(rng, 16, 12, 1, 2.0, 5.0), f = random_image(rng, 16, 12, 1);
    const double before = lidar_loss(d, f, t, cam.intrinsics, LossWeights{}).total;
    for (std::size_t i = 0; i < d.data().size(); ++i) {
        if (!t.depth.valid[i]) d.data()[i] += 7.0;
        if (!t.reflectance.valid[i]) f.data()[i] = 0.123;
    }
    CHECK(lidar_loss(d, f, t, cam.intrinsics, LossWeights{}).total == before);
}

TEST_CASE("lidar loss gradients match central differences") {
    std::mt19937_64 rng(31);
    const CameraModel cam = make_camera(16, 12);
    const LidarTargets t = random_targets(rng, 16, 12, cam.intrinsics);
    Image d = random_image(rng, 16, 12, 1, 2.0, 5.0), f = random_image(rng, 16, 12, 1);
    const LossWeights w;
    Image gd, gf;
    const LidarLossTerms l = lidar_loss(d, f, t, cam.intrinsics, w, &gd, &gf);
    CHECK(l.reflectance_gradient > 0.0);
    auto value = [&] { return lidar_loss(d, f, t, cam.intrinsics, w).total; };
    CHECK(fd_worst(d, gd, value) <= 1e-4);
    CHECK(fd_worst(f, gf, value) <= 1e-4);
}

TEST_CASE("every term vanishes when the render equals the targets") {
    std::mt19937_64 rng(40);
    const CameraModel cam = make_camera(16, 16);
    const LidarTargets t = random_targets(rng, 16, 16, cam.intrinsics);
    RenderedFrame frame{random_image(rng, 16, 16, 3), Image(16, 16), Image(16, 16), Image(16, 16, 1, 1.0)};
    for (std::size_t i = 0; i < 256; ++i) {
        frame.depth.data()[i] = t.depth.valid[i] ? t.depth.values[i] : 3.0;
        frame.reflectance.data()[i] = t.reflectance.valid[i] ? t.reflectance.values[i] : 0.5;
    }
    LossWeights w;
    w.direction = w.magnitude = 0.0;
    const LossTerms terms = evaluate_loss(frame, frame.color, &t, cam.intrinsics, w);
    CHECK(terms.rgb == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(terms.depth == 0.0);
    CHECK(terms.reflectance == 0.0);
    // Points unprojected from depth coincide with the target points, so the gradient term is exact as well.
    CHECK(terms.reflectance_gradient < 1e-9);
}
