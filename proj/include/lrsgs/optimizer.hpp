#pragma once

#include "lrsgs/dataset.hpp"
#include "lrsgs/densify_transform.hpp"
#include "lrsgs/gaussian_scene.hpp"
#include "lrsgs/losses.hpp"
#include "lrsgs/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

namespace lrsgs {

struct LearningRates {
    /// Position rate decays exponentially from `mean` to `mean_final` over the run.
    double mean = 1.6e-4;
    double mean_final = 1.6e-6;
    double rotation = 1e-3;
    double scales = 5e-3;
    double opacity = 5e-2;
    double sh = 2.5e-3;
    double reflectance = 5e-3;
    double sky = 1e-2;
    double pose = 1e-4;

    double for_group(ParamGroup group) const;
};

struct TrainConfig {
    int iterations = 7000;
    LearningRates lr;
    int densify_start = 500;
    /// -1 means half the iteration count. The window is clipped to the run; an empty window disables density control.
    int densify_end = -1;
    std::uint64_t seed = 0;
    int threads = 1;
    /// Run the upgrade/downgrade rule at each density-control step.
    bool salient_transform = true;
    /// Held-out evaluation period; the final iteration is always evaluated. Zero evaluates only at the end.
    int eval_interval = 1000;
    /// Zero disables periodic checkpoints.
    int checkpoint_interval = 1000;
    int log_interval = 100;
    RenderOptions render;

    int densify_stop() const { return std::min(iterations, densify_end < 0 ? iterations / 2 : densify_end); }
    /// Throws Config.
    void validate() const;
};

/// First-order adaptive-moment update with per-group rates. Moments follow primitives by id, so they
/// survive reordering by density control; a primitive whose parameter layout changed starts fresh.
class AdamOptimizer {
public:
    explicit AdamOptimizer(LearningRates lr, int iterations);

    /// Applies one update and renormalizes every quaternion.
    void step(SceneGraph& scene, const SceneGradient& grad, int iteration);
    double mean_rate(int iteration) const;
    /// Drops state for primitives no longer in the scene.
    void retain(const SceneGraph& scene);

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
        int steps = 0;
    };

    template <class Visit>
    void update(Moments& state, std::size_t size, Visit&& visit, int iteration);

    LearningRates lr_;
    int iterations_;
    std::unordered_map<std::uint64_t, Moments> primitives_;
    std::vector<Moments> poses_;
    Moments sky_;
};

struct LossReport {
    int iteration = 0;
    int frame = 0;
    int camera = 0;
    LossTerms terms;
    std::size_t gaussians = 0;
};

/// Gradients of the full loss for one view, without touching the scene.
struct ViewGradient {
    LossTerms terms;
    SceneGradient grad;
    RenderPass pass;
    RenderGradient render_grad;
    std::vector<GaussianSource> sources;
};

/// Throws NonFiniteLoss naming the first non-finite term (or "gradient").
ViewGradient view_gradient(const SceneGraph& scene, const View& view, const CameraModel& camera,
                           const LossWeights& weights, const RenderOptions& options);

/// Render, loss, backward, one optimizer update, densification statistics. On NonFiniteLoss the scene and
/// optimizer state are left untouched.
LossReport train_step(SceneGraph& scene, const View& view, const CameraModel& camera, const LossWeights& weights,
                      AdamOptimizer& optimizer, int iteration, const RenderOptions& options = {},
                      DensifyStats* stats = nullptr);

struct GroupCheck {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
};

struct GradientCheckReport {
    std::array<GroupCheck, kParamGroupCount> groups{};
    double max_relative_error() const;
};

/// Central differences over every parameter against the analytic gradient with alpha_min and the
/// transmittance cutoff disabled. Entries where both magnitudes are at most 1e-6 are skipped.
GradientCheckReport check_gradients(const SceneGraph& scene, const View& view, const CameraModel& camera,
                                    const LossWeights& weights, double step = 1e-4, int threads = 1);

struct HeldOutMetrics {
    int iteration = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double reflectance_rmse = 0.0;
    std::size_t gaussians = 0;
};

/// Mean PSNR and SSIM over views and pooled reflectance RMSE over valid LiDAR pixels.
HeldOutMetrics evaluate(const SceneGraph& scene, std::span<const View> views, std::span<const CameraModel> cameras,
                        const RenderOptions& options = {});

struct TrainCallbacks {
    std::function<void(int iteration, const SceneGraph& scene)> checkpoint;
    std::function<void(const MutationEvent& event)> mutation;
    std::function<void(const LossReport& report)> progress;
};

struct TrainResult {
    SceneGraph scene;
    std::vector<LossReport> history;
    std::vector<HeldOutMetrics> evaluations;
    MutationLog mutations;
    int failed_steps = 0;
};

/// Seeded shuffled single-view steps with density control inside the window. Throws NonFiniteLoss after
/// three consecutive failed steps.
TrainResult train(SceneGraph scene, const PreparedData& data, const TrainConfig& config, const LossWeights& weights,
                  const DensifyConfig& densify, const TrainCallbacks& callbacks = {});

} // namespace lrsgs
