#include "lrsgs/densify_transform.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace lrsgs {

namespace {

std::vector<GaussianPrimitive>& node_list(SceneGraph& scene, int node) {
    return node < 0 ? scene.background : scene.objects[static_cast<std::size_t>(node)].gaussians;
}

/// Eigen-directions of a primitive sorted by descending scale.
void sorted_axes(const GaussianPrimitive& g, Vec3& scales, Mat3& axes) {
    const Vec3 s = g.scales();
    const Mat3 r = g.rotation_matrix();
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });
    for (int i = 0; i < 3; ++i) {
        scales[i] = s[order[i]];
        axes.col(i) = r.col(order[i]);
    }
}

Vec4 rotation_with_columns(const Vec3& c0, const Vec3& c1) {
    Mat3 r;
    r.col(0) = c0.normalized();
    r.col(1) = c1.normalized();
    r.col(2) = r.col(0).cross(r.col(1));
    return quaternion_from_rotation(r);
}

GaussianPrimitive upgraded(const GaussianPrimitive& g, const ShapeStats& st) {
    Vec3 s;
    Mat3 axes;
    sorted_axes(g, s, axes);
    GaussianPrimitive out = g;
    if (st.linearity >= st.planarity) {
        out.kind = SalienceKind::EdgeSalient;
        out.rotation = rotation_with_columns(axes.col(0), axes.col(1));
        out.log_scales = Vec3(std::log(s[0]), std::log(0.5 * (s[1] + s[2])), 0.0);
    } else {
        out.kind = SalienceKind::PlanarSalient;
        // Third column follows the smallest axis, up to sign.
        out.rotation = rotation_with_columns(axes.col(0), axes.col(1));
        out.log_scales = Vec3(std::log(0.5 * (s[0] + s[1])), std::log(s[2]), 0.0);
    }
    out.transform_counter = 0;
    return out;
}

GaussianPrimitive downgraded(const GaussianPrimitive& g) {
    GaussianPrimitive out = g;
    const Vec3 s = g.scales();
    out.kind = SalienceKind::NonSalient;
    out.log_scales = s.array().log().matrix();
    out.transform_counter = 0;
    return out;
}

GaussianPrimitive with_scales(const GaussianPrimitive& g, double par_div, double perp_div) {
    GaussianPrimitive out = g;
    switch (g.kind) {
    case SalienceKind::EdgeSalient:
        out.log_scales[0] -= std::log(par_div);
        out.log_scales[1] -= std::log(perp_div);
        break;
    case SalienceKind::PlanarSalient:
        out.log_scales[0] -= std::log(perp_div);
        out.log_scales[1] -= std::log(par_div);
        break;
    default: out.log_scales -= Vec3::Constant(std::log(par_div));
    }
    return out;
}

} // namespace

void DensifyConfig::validate() const {
    if (!(tau_min > 0.0 && tau_min < tau_max)) {
        throw Error(ErrorCode::Config, "salient transform needs 0 < tau_min < tau_max");
    }
    if (!(split_factor > 1.0)) {
        throw Error(ErrorCode::Config, "split_factor must exceed 1");
    }
    if (!(grad_threshold > 0.0) || !(split_scale_threshold > 0.0) || prune_opacity < 0.0 ||
        !(prune_screen_fraction > 0.0) || clone_offset < 0.0 || interval <= 0) {
        throw Error(ErrorCode::Config, "density control thresholds must be positive");
    }
}

ShapeStats shape_stats(const GaussianPrimitive& g) {
    Vec3 s = g.scales();
    std::sort(s.data(), s.data() + 3, std::greater<>());
    ShapeStats st;
    st.sorted = s;
    st.linearity = (s[0] - s[1]) / s[0];
    st.planarity = (s[1] - s[2]) / s[0];
    return st;
}

const char* to_string(MutationKind kind) {
    switch (kind) {
    case MutationKind::Split: return "split";
    case MutationKind::Clone: return "clone";
    case MutationKind::Prune: return "prune";
    case MutationKind::Upgrade: return "upgrade";
    case MutationKind::Downgrade: return "downgrade";
    }
    return "unknown";
}

std::string MutationEvent::journal_line() const {
    nlohmann::json j;
    j["iter"] = iteration;
    j["event"] = to_string(kind);
    j["node"] = node;
    j["parent_id"] = parent_id;
    std::vector<std::uint64_t> ids;
    for (const auto& c : children) ids.push_back(c.id);
    j["child_ids"] = ids;
    j["kind"] = to_string(salience);
    return j.dump();
}

std::size_t MutationLog::count(MutationKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [&](const MutationEvent& e) { return e.kind == kind; }));
}

void MutationLog::append(const MutationLog& other) {
    events.insert(events.end(), other.events.begin(), other.events.end());
}

void replay(SceneGraph& scene, const MutationLog& log) {
    for (const MutationEvent& e : log.events) {
        auto& list = node_list(scene, e.node);
        const auto it = std::find_if(list.begin(), list.end(), [&](const GaussianPrimitive& g) { return g.id == e.parent_id; });
        if (it == list.end()) {
            throw Error(ErrorCode::InvalidArgument, "mutation parent " + std::to_string(e.parent_id) + " not found");
        }
        switch (e.kind) {
        case MutationKind::Prune: list.erase(it); break;
        case MutationKind::Upgrade:
        case MutationKind::Downgrade: *it = e.children.at(0); break;
        case MutationKind::Clone: list.insert(list.end(), e.children.begin(), e.children.end()); break;
        case MutationKind::Split:
            list.erase(it);
            list.insert(list.end(), e.children.begin(), e.children.end());
            break;
        }
        for (const auto& c : e.children) scene.next_id = std::max(scene.next_id, c.id + 1);
    }
}

DensifyStats DensifyStats::for_scene(const SceneGraph& scene) {
    DensifyStats s;
    s.reset(scene);
    return s;
}

void DensifyStats::reset(const SceneGraph& scene) {
    nodes.assign(scene.objects.size() + 1, {});
    for (int n = -1; n < static_cast<int>(scene.objects.size()); ++n) {
        const std::size_t count =
            n < 0 ? scene.background.size() : scene.objects[static_cast<std::size_t>(n)].gaussians.size();
        Node& nd = node(n);
        nd.grad_norm_sum.assign(count, 0.0);
        nd.visible_count.assign(count, 0);
        nd.grad_sum.assign(count, Vec3::Zero());
        nd.max_radius_fraction.assign(count, 0.0);
    }
}

void DensifyStats::record(const SceneGraph& scene, int frame, std::span<const GaussianSource> sources,
                          const RenderPass& pass, const RenderGradient& grad) {
    const double half_w = 0.5 * pass.camera.width, half_h = 0.5 * pass.camera.height;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& pg = pass.projected[i];
        if (!pg) continue;
        const GaussianSource& src = sources[i];
        Node& nd = node(src.node);
        const Vec2 ndc(grad.mean2d[i].x() * half_w, grad.mean2d[i].y() * half_h);
        nd.grad_norm_sum[src.index] += ndc.norm();
        nd.visible_count[src.index] += 1;
        Vec3 g = grad.gaussians[i].mean;
        if (src.node >= 0) {
            const auto& pose = scene.objects[static_cast<std::size_t>(src.node)].poses[static_cast<std::size_t>(frame)];
            g = rotation_from_quaternion(pose.rotation).transpose() * g;
        }
        nd.grad_sum[src.index] += g;
        nd.max_radius_fraction[src.index] =
            std::max(nd.max_radius_fraction[src.index], pg->radius / pass.camera.width);
    }
}

MutationLog salient_transform(SceneGraph& scene, const DensifyConfig& config, int iteration) {
    MutationLog log;
    for (int n = -1; n < static_cast<int>(scene.objects.size()); ++n) {
        for (GaussianPrimitive& g : node_list(scene, n)) {
            const ShapeStats st = shape_stats(g);
            const bool salient = g.kind != SalienceKind::NonSalient;
            const bool qualifies = salient ? st.salience() < config.tau_min : st.salience() > config.tau_max;
            g.transform_counter = qualifies ? static_cast<std::int8_t>(g.transform_counter + 1) : 0;
            if (g.transform_counter < 2) continue;

            MutationEvent e;
            e.iteration = iteration;
            e.node = n;
            e.parent_id = g.id;
            e.kind = salient ? MutationKind::Downgrade : MutationKind::Upgrade;
            g = salient ? downgraded(g) : upgraded(g, st);
            e.salience = g.kind;
            e.children.push_back(g);
            log.events.push_back(std::move(e));
        }
    }
    return log;
}

std::vector<GaussianPrimitive> split_children(const GaussianPrimitive& parent, const Vec3& grad_direction,
                                              double split_factor, std::mt19937_64& rng) {
    std::vector<GaussianPrimitive> out;
    const Mat3 r = parent.rotation_matrix();
    switch (parent.kind) {
    case SalienceKind::EdgeSalient: {
        const double par = std::exp(parent.log_scales[0]);
        const Vec3 offset = 0.5 * par * r.col(0);
        for (double sgn : {1.0, -1.0}) {
            GaussianPrimitive c = with_scales(parent, split_factor, split_factor);
            c.mean = parent.mean + sgn * offset;
            out.push_back(c);
        }
        break;
    }
    case SalienceKind::PlanarSalient: {
        const double perp = std::exp(parent.log_scales[0]);
        const Vec3 normal = r.col(2);
        Vec3 dir = grad_direction - normal * normal.dot(grad_direction);
        if (dir.norm() < 1e-12) {
            dir = r.col(0);
        }
        // Re-project after normalizing so the offset is orthogonal to the normal to rounding.
        dir.normalize();
        dir -= normal * normal.dot(dir);
        const Vec3 offset = 0.5 * perp * dir.normalized();
        for (double sgn : {1.0, -1.0}) {
            GaussianPrimitive c = with_scales(parent, 1.0, split_factor);
            c.mean = parent.mean + sgn * offset;
            out.push_back(c);
        }
        break;
    }
    default: {
        std::normal_distribution<double> n(0.0, 1.0);
        const Vec3 s = parent.scales();
        for (int k = 0; k < 2; ++k) {
            GaussianPrimitive c = with_scales(parent, split_factor, split_factor);
            const Vec3 z(n(rng), n(rng), n(rng));
            c.mean = parent.mean + r * s.cwiseProduct(z);
            out.push_back(c);
        }
    }
    }
    for (auto& c : out) c.transform_counter = 0;
    return out;
}

MutationLog densify_and_prune(SceneGraph& scene, const DensifyStats& stats, const DensifyConfig& config,
                              std::mt19937_64& rng, int iteration) {
    MutationLog log;
    for (int n = -1; n < static_cast<int>(scene.objects.size()); ++n) {
        auto& list = node_list(scene, n);
        const DensifyStats::Node& nd = stats.node(n);
        if (nd.visible_count.size() != list.size()) {
            throw Error(ErrorCode::DimensionMismatch, "density statistics do not match the scene");
        }
        std::vector<GaussianPrimitive> next;
        next.reserve(list.size());
        std::vector<GaussianPrimitive> added;
        for (std::size_t i = 0; i < list.size(); ++i) {
            const GaussianPrimitive& g = list[i];
            MutationEvent e;
            e.iteration = iteration;
            e.node = n;
            e.parent_id = g.id;
            e.salience = g.kind;

            if (g.opacity() < config.prune_opacity || nd.max_radius_fraction[i] > config.prune_screen_fraction) {
                e.kind = MutationKind::Prune;
                log.events.push_back(std::move(e));
                continue;
            }
            const int seen = nd.visible_count[i];
            const double mean_grad = seen > 0 ? nd.grad_norm_sum[i] / seen : 0.0;
            if (!(mean_grad > config.grad_threshold)) {
                next.push_back(g);
                continue;
            }
            const Vec3 descent = -nd.grad_sum[i];
            if (g.scales().maxCoeff() > config.split_scale_threshold) {
                e.kind = MutationKind::Split;
                e.children = split_children(g, descent, config.split_factor, rng);
            } else {
                e.kind = MutationKind::Clone;
                next.push_back(g);
                GaussianPrimitive c = g;
                if (descent.norm() > 0.0) c.mean += config.clone_offset * descent.normalized();
                c.transform_counter = 0;
                e.children.push_back(c);
            }
            for (auto& c : e.children) c.id = scene.next_id++;
            added.insert(added.end(), e.children.begin(), e.children.end());
            log.events.push_back(std::move(e));
        }
        next.insert(next.end(), added.begin(), added.end());
        list = std::move(next);
    }
    return log;
}

} // namespace lrsgs
