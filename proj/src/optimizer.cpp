#include "lrsgs/optimizer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

namespace lrsgs {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-15;

bool finite(const SceneGradient& g) {
    bool ok = true;
    auto check_prim = [&](const PrimitiveGradient& p) {
        ok = ok && p.mean.allFinite() && p.rotation.allFinite() && p.log_scales.allFinite() &&
             std::isfinite(p.opacity_logit) && std::isfinite(p.reflectance_logit);
        for (const auto& c : p.sh) ok = ok && c.allFinite();
    };
    for (const auto& p : g.background) check_prim(p);
    for (const auto& o : g.objects)
        for (const auto& p : o) check_prim(p);
    for (const auto& o : g.poses)
        for (const auto& p : o) ok = ok && p.rotation.allFinite() && p.translation.allFinite();
    for (const auto& s : g.sky) ok = ok && s.allFinite();
    return ok;
}

double total_loss(const SceneGraph& scene, const View& view, const CameraModel& camera, const LossWeights& weights,
                  const RenderOptions& options) {
    const auto world = world_gaussians(scene, view.frame);
    const RenderPass pass = render_forward(world, camera, scene.sky, scene.sh_degree, options);
    return evaluate_loss(pass.frame, view.rgb, &view.lidar, camera.intrinsics, weights).total;
}

} // namespace

double LearningRates::for_group(ParamGroup group) const {
    switch (group) {
    case ParamGroup::Mean: return mean;
    case ParamGroup::Rotation: return rotation;
    case ParamGroup::EdgeScales:
    case ParamGroup::PlanarScales:
    case ParamGroup::NonSalientScales: return scales;
    case ParamGroup::Opacity: return opacity;
    case ParamGroup::Sh: return sh;
    case ParamGroup::Reflectance: return reflectance;
    case ParamGroup::Sky: return sky;
    case ParamGroup::ObjectPose: return pose;
    }
    return 0.0;
}

void TrainConfig::validate() const {
    if (iterations < 0) throw Error(ErrorCode::Config, "iterations must be non-negative");
    for (double r : {lr.mean, lr.mean_final, lr.rotation, lr.scales, lr.opacity, lr.sh, lr.reflectance, lr.sky, lr.pose}) {
        if (!(r > 0.0)) throw Error(ErrorCode::Config, "learning rates must be positive");
    }
    if (densify_start < 0 || densify_end < -1) {
        throw Error(ErrorCode::Config, "densify window bounds must be non-negative (densify_end -1 means iterations / 2)");
    }
    if (threads < 1 || eval_interval < 0 || checkpoint_interval < 0 || log_interval < 0) {
        throw Error(ErrorCode::Config, "threads must be >= 1 and intervals >= 0");
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(LearningRates lr, int iterations) : lr_(lr), iterations_(iterations) {}

double AdamOptimizer::mean_rate(int iteration) const {
    const double t = std::clamp(static_cast<double>(iteration) / std::max(iterations_ - 1, 1), 0.0, 1.0);
    return std::exp((1.0 - t) * std::log(lr_.mean) + t * std::log(lr_.mean_final));
}

template <class Visit>
void AdamOptimizer::update(Moments& state, std::size_t size, Visit&& visit, int iteration) {
    if (state.m.size() != size) {
        state.m.assign(size, 0.0);
        state.v.assign(size, 0.0);
        state.steps = 0;
    }
    ++state.steps;
    const double c1 = 1.0 - std::pow(kBeta1, state.steps);
    const double c2 = 1.0 - std::pow(kBeta2, state.steps);
    const double mean_lr = mean_rate(iteration);
    std::size_t k = 0;
    visit([&](ParamGroup group, double& p, double g) {
        double& m = state.m[k];
        double& v = state.v[k];
        ++k;
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g * g;
        const double lr = group == ParamGroup::Mean ? mean_lr : lr_.for_group(group);
        p -= lr * (m / c1) / (std::sqrt(v / c2) + kAdamEpsilon);
    });
}

void AdamOptimizer::step(SceneGraph& scene, const SceneGradient& grad, int iteration) {
    auto prim = [&](GaussianPrimitive& g, const PrimitiveGradient& d) {
        const auto size = static_cast<std::size_t>(primitive_parameter_count(g, scene.sh_degree));
        update(primitives_[g.id], size, [&](auto&& fn) {
            PrimitiveGradient copy = d;
            auto adapter = [&](ParamGroup group, double& p, double& gv) { fn(group, p, gv); };
            detail::visit_primitive(g, copy, scene.sh_degree, adapter);
        }, iteration);
        g.rotation = normalize_quaternion(g.rotation);
    };
    for (std::size_t i = 0; i < scene.background.size(); ++i) prim(scene.background[i], grad.background[i]);
    if (poses_.size() != scene.objects.size()) poses_.resize(scene.objects.size());
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
        auto& obj = scene.objects[o];
        for (std::size_t i = 0; i < obj.gaussians.size(); ++i) prim(obj.gaussians[i], grad.objects[o][i]);
        update(poses_[o], obj.poses.size() * 7, [&](auto&& fn) {
            for (std::size_t f = 0; f < obj.poses.size(); ++f) {
                for (int i = 0; i < 4; ++i) fn(ParamGroup::ObjectPose, obj.poses[f].rotation[i], grad.poses[o][f].rotation[i]);
                for (int i = 0; i < 3; ++i)
                    fn(ParamGroup::ObjectPose, obj.poses[f].translation[i], grad.poses[o][f].translation[i]);
            }
        }, iteration);
        for (auto& p : obj.poses) p.rotation = normalize_quaternion(p.rotation);
    }
    update(sky_, scene.sky.texels.size() * 3, [&](auto&& fn) {
        for (std::size_t t = 0; t < scene.sky.texels.size(); ++t)
            for (int c = 0; c < 3; ++c) fn(ParamGroup::Sky, scene.sky.texels[t][c], grad.sky[t][c]);
    }, iteration);
}

void AdamOptimizer::retain(const SceneGraph& scene) {
    std::unordered_set<std::uint64_t> live;
    for (const auto& g : scene.background) live.insert(g.id);
    for (const auto& o : scene.objects)
        for (const auto& g : o.gaussians) live.insert(g.id);
    std::erase_if(primitives_, [&](const auto& kv) { return !live.count(kv.first); });
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

ViewGradient view_gradient(const SceneGraph& scene, const View& view, const CameraModel& camera,
                           const LossWeights& weights, const RenderOptions& options) {
    ViewGradient out;
    const auto world = world_gaussians(scene, view.frame, &out.sources);
    out.pass = render_forward(world, camera, scene.sky, scene.sh_degree, options);
    RenderOutputGradient og;
    out.terms = evaluate_loss(out.pass.frame, view.rgb, &view.lidar, camera.intrinsics, weights, &og);
    if (const char* bad = out.terms.first_non_finite()) {
        throw Error(ErrorCode::NonFiniteLoss, std::string("non-finite loss term '") + bad + "' at frame " +
                                                  std::to_string(view.frame) + ", camera " + std::to_string(view.camera));
    }
    out.render_grad = render_backward(out.pass, world, scene.sky, og);
    out.grad = SceneGradient::zeros_like(scene);
    accumulate_scene_gradient(scene, view.frame, out.sources, out.render_grad.gaussians, out.render_grad.sky, out.grad);
    if (!finite(out.grad)) {
        throw Error(ErrorCode::NonFiniteLoss, "non-finite term 'gradient' at frame " + std::to_string(view.frame) +
                                                  ", camera " + std::to_string(view.camera));
    }
    return out;
}

LossReport train_step(SceneGraph& scene, const View& view, const CameraModel& camera, const LossWeights& weights,
                      AdamOptimizer& optimizer, int iteration, const RenderOptions& options, DensifyStats* stats) {
    ViewGradient vg = view_gradient(scene, view, camera, weights, options);
    if (stats) stats->record(scene, view.frame, vg.sources, vg.pass, vg.render_grad);
    optimizer.step(scene, vg.grad, iteration);
    LossReport r;
    r.iteration = iteration;
    r.frame = view.frame;
    r.camera = view.camera;
    r.terms = vg.terms;
    r.gaussians = scene.gaussian_count();
    return r;
}

double GradientCheckReport::max_relative_error() const {
    double m = 0.0;
    for (const auto& g : groups) m = std::max(m, g.max_relative_error);
    return m;
}

GradientCheckReport check_gradients(const SceneGraph& scene, const View& view, const CameraModel& camera,
                                    const LossWeights& weights, double step, int threads) {
    RenderOptions options;
    options.alpha_min = 0.0;
    options.transmittance_cutoff = 0.0;
    options.threads = threads;
    SceneGraph work = scene;
    SceneGradient analytic = view_gradient(work, view, camera, weights, options).grad;
    GradientCheckReport report;
    visit_parameters(work, analytic, [&](ParamGroup group, double& p, double& a) {
        const double p0 = p;
        p = p0 + step;
        const double lp = total_loss(work, view, camera, weights, options);
        p = p0 - step;
        const double lm = total_loss(work, view, camera, weights, options);
        p = p0;
        const double numeric = (lp - lm) / (2.0 * step);
        const double scale = std::max(std::abs(a), std::abs(numeric));
        if (scale <= 1e-6) return;
        auto& g = report.groups[static_cast<std::size_t>(group)];
        g.max_relative_error = std::max(g.max_relative_error, std::abs(a - numeric) / scale);
        ++g.checked;
    });
    return report;
}

HeldOutMetrics evaluate(const SceneGraph& scene, std::span<const View> views, std::span<const CameraModel> cameras,
                        const RenderOptions& options) {
    HeldOutMetrics out;
    out.gaussians = scene.gaussian_count();
    if (views.empty()) return out;
    double sq = 0.0;
    std::size_t pixels = 0;
    for (const auto& v : views) {
        const auto world = world_gaussians(scene, v.frame);
        const RenderedFrame frame =
            render(world, cameras[static_cast<std::size_t>(v.camera)], scene.sky, scene.sh_degree, options);
        const Metrics m = metrics(frame.color, v.rgb, frame.reflectance, v.lidar.reflectance);
        out.psnr += m.psnr;
        out.ssim += m.ssim;
        sq += m.reflectance_rmse * m.reflectance_rmse * static_cast<double>(m.reflectance_pixels);
        pixels += m.reflectance_pixels;
    }
    out.psnr /= static_cast<double>(views.size());
    out.ssim /= static_cast<double>(views.size());
    out.reflectance_rmse = pixels ? std::sqrt(sq / static_cast<double>(pixels)) : 0.0;
    return out;
}

TrainResult train(SceneGraph scene, const PreparedData& data, const TrainConfig& config, const LossWeights& weights,
                  const DensifyConfig& densify, const TrainCallbacks& callbacks) {
    config.validate();
    weights.validate();
    densify.validate();
    if (data.train.empty()) throw Error(ErrorCode::EmptyInput, "no training views");
    scene.validate();

    TrainResult result;
    RenderOptions options = config.render;
    options.threads = config.threads;
    AdamOptimizer adam(config.lr, config.iterations);
    std::mt19937_64 rng(config.seed);
    DensifyStats stats = DensifyStats::for_scene(scene);
    std::vector<std::size_t> order(data.train.size());
    std::size_t cursor = order.size();
    int consecutive_failures = 0;

    for (int it = 1; it <= config.iterations; ++it) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const View& view = data.train[order[cursor++]];
        try {
            const LossReport r = train_step(scene, view, data.cameras[static_cast<std::size_t>(view.camera)], weights,
                                            adam, it - 1, options, &stats);
            consecutive_failures = 0;
            result.history.push_back(r);
            if (callbacks.progress) callbacks.progress(r);
            if (config.log_interval > 0 && it % config.log_interval == 0) {
                spdlog::info("iter {:5d}  loss {:.5f}  rgb {:.5f}  lidar {:.5f}  joint {:.5f}  gaussians {}", it,
                             r.terms.total, r.terms.rgb, r.terms.lidar, r.terms.joint, r.gaussians);
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFiniteLoss) throw;
            ++result.failed_steps;
            spdlog::warn("iter {}: {}", it, e.what());
            if (++consecutive_failures >= 3) throw;
            continue;
        }

        if (it > config.densify_start && it <= config.densify_stop() && it % densify.interval == 0) {
            MutationLog log;
            if (config.salient_transform) log = salient_transform(scene, densify, it);
            log.append(densify_and_prune(scene, stats, densify, rng, it));
            if (callbacks.mutation) {
                for (const auto& e : log.events) callbacks.mutation(e);
            }
            result.mutations.append(log);
            stats.reset(scene);
            adam.retain(scene);
        }
        if ((config.eval_interval > 0 && it % config.eval_interval == 0) || it == config.iterations) {
            HeldOutMetrics m = evaluate(scene, data.test, data.cameras, options);
            m.iteration = it;
            result.evaluations.push_back(m);
            spdlog::info("iter {:5d}  held-out psnr {:.3f}  ssim {:.4f}  reflectance rmse {:.4f}", it, m.psnr, m.ssim,
                         m.reflectance_rmse);
        }
        if (callbacks.checkpoint && config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0) {
            callbacks.checkpoint(it, scene);
        }
    }
    result.scene = std::move(scene);
    return result;
}

} // namespace lrsgs
