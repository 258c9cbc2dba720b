#pragma once

#include "lrsgs/gaussian_scene.hpp"
#include "lrsgs/rasterizer.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace lrsgs {

struct DensifyConfig {
    /// Mean view-space (NDC) positional gradient norm above which a primitive is densified.
    double grad_threshold = 2e-4;
    /// Largest materialized scale, meters, separating split from clone.
    double split_scale_threshold = 0.05;
    double split_factor = 1.6;
    double prune_opacity = 0.005;
    /// Primitives whose screen radius ever exceeded this fraction of the image width are pruned.
    double prune_screen_fraction = 0.2;
    double clone_offset = 0.01;
    double tau_max = 0.5;
    double tau_min = 0.1;
    int interval = 100;

    void validate() const;
};

struct ShapeStats {
    /// Materialized scales sorted descending.
    Vec3 sorted = Vec3::Zero();
    double linearity = 0.0;
    double planarity = 0.0;

    double salience() const { return std::max(linearity, planarity); }
};

ShapeStats shape_stats(const GaussianPrimitive& g);

enum class MutationKind : std::uint8_t { Split, Clone, Prune, Upgrade, Downgrade };

const char* to_string(MutationKind kind);

/// One population change. `children` holds the primitives that replace (split, transform) or join (clone) the
/// parent so the change can be replayed exactly.
struct MutationEvent {
    int iteration = 0;
    MutationKind kind = MutationKind::Prune;
    /// -1 for background, otherwise object index.
    int node = -1;
    std::uint64_t parent_id = 0;
    SalienceKind salience = SalienceKind::NonSalient;
    std::vector<GaussianPrimitive> children;

    /// Single-line journal record.
    std::string journal_line() const;
};

struct MutationLog {
    std::vector<MutationEvent> events;

    std::size_t count(MutationKind kind) const;
    void append(const MutationLog& other);
};

/// Applies logged events to a scene in order. Throws InvalidArgument when a parent id is missing.
void replay(SceneGraph& scene, const MutationLog& log);

/// Per-primitive statistics gathered between density-control steps, laid out like the scene.
struct DensifyStats {
    struct Node {
        std::vector<double> grad_norm_sum;
        std::vector<int> visible_count;
        /// Accumulated node-local positional gradient.
        std::vector<Vec3> grad_sum;
        std::vector<double> max_radius_fraction;
    };
    /// Index 0 is the background, 1 + o is object o.
    std::vector<Node> nodes;

    static DensifyStats for_scene(const SceneGraph& scene);
    void reset(const SceneGraph& scene);
    Node& node(int scene_node) { return nodes[static_cast<std::size_t>(scene_node + 1)]; }
    const Node& node(int scene_node) const { return nodes[static_cast<std::size_t>(scene_node + 1)]; }

    /// Adds one rendered view's screen-space gradients and radii.
    void record(const SceneGraph& scene, int frame, std::span<const GaussianSource> sources, const RenderPass& pass,
                const RenderGradient& grad);
};

/// Upgrades and downgrades with two-evaluation hysteresis; updates transform counters in place.
MutationLog salient_transform(SceneGraph& scene, const DensifyConfig& config, int iteration = 0);

/// Clone, directional split, and prune driven by `stats`.
MutationLog densify_and_prune(SceneGraph& scene, const DensifyStats& stats, const DensifyConfig& config,
                              std::mt19937_64& rng, int iteration = 0);

/// Children of a split, placed and shrunk according to the parent's salience kind.
std::vector<GaussianPrimitive> split_children(const GaussianPrimitive& parent, const Vec3& grad_direction,
                                              double split_factor, std::mt19937_64& rng);

} // namespace lrsgs
