#include "lrsgs/gaussian_scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lrsgs {

namespace {

constexpr double kMinSpacing = 1e-4;

PrimitiveGradient& add_world_terms(PrimitiveGradient& pg, const WorldGaussianGradient& w) {
    pg.opacity_logit += w.opacity_logit;
    pg.reflectance_logit += w.reflectance_logit;
    for (std::size_t k = 0; k < pg.sh.size(); ++k) {
        pg.sh[k] += w.sh[k];
    }
    return pg;
}

} // namespace

const char* to_string(SalienceKind kind) {
    switch (kind) {
    case SalienceKind::NonSalient: return "non_salient";
    case SalienceKind::EdgeSalient: return "edge_salient";
    case SalienceKind::PlanarSalient: return "planar_salient";
    }
    return "unknown";
}

const char* to_string(ParamGroup group) {
    switch (group) {
    case ParamGroup::Mean: return "mean";
    case ParamGroup::Rotation: return "rotation";
    case ParamGroup::EdgeScales: return "edge_scales";
    case ParamGroup::PlanarScales: return "planar_scales";
    case ParamGroup::NonSalientScales: return "non_salient_scales";
    case ParamGroup::Opacity: return "opacity";
    case ParamGroup::Sh: return "sh";
    case ParamGroup::Reflectance: return "reflectance_logit";
    case ParamGroup::Sky: return "sky";
    case ParamGroup::ObjectPose: return "object_pose";
    }
    return "unknown";
}

Vec3 GaussianPrimitive::scales() const {
    switch (kind) {
    case SalienceKind::EdgeSalient: {
        const double par = std::exp(log_scales[0]), perp = std::exp(log_scales[1]);
        return {par, perp, perp};
    }
    case SalienceKind::PlanarSalient: {
        const double perp = std::exp(log_scales[0]), par = std::exp(log_scales[1]);
        return {perp, perp, par};
    }
    default: return log_scales.array().exp().matrix();
    }
}

std::optional<Vec3> GaussianPrimitive::dominant_direction() const {
    switch (kind) {
    case SalienceKind::EdgeSalient: return rotation_matrix().col(0);
    case SalienceKind::PlanarSalient: return rotation_matrix().col(2);
    default: return std::nullopt;
    }
}

GaussianPrimitive GaussianPrimitive::non_salient(const Vec3& mean, const Vec4& rotation, const Vec3& scales) {
    GaussianPrimitive g;
    g.mean = mean;
    g.rotation = normalize_quaternion(rotation);
    g.kind = SalienceKind::NonSalient;
    g.log_scales = scales.array().log().matrix();
    return g;
}

GaussianPrimitive GaussianPrimitive::edge_salient(const Vec3& mean, const Vec4& rotation, double sigma_par,
                                                  double sigma_perp) {
    GaussianPrimitive g;
    g.mean = mean;
    g.rotation = normalize_quaternion(rotation);
    g.kind = SalienceKind::EdgeSalient;
    g.log_scales = Vec3(std::log(sigma_par), std::log(sigma_perp), 0.0);
    return g;
}

GaussianPrimitive GaussianPrimitive::planar_salient(const Vec3& mean, const Vec4& rotation, double sigma_perp,
                                                    double sigma_par) {
    GaussianPrimitive g;
    g.mean = mean;
    g.rotation = normalize_quaternion(rotation);
    g.kind = SalienceKind::PlanarSalient;
    g.log_scales = Vec3(std::log(sigma_perp), std::log(sigma_par), 0.0);
    return g;
}

Mat3 covariance(const GaussianPrimitive& g) {
    const Mat3 r = g.rotation_matrix();
    const Vec3 s = g.scales();
    return r * s.array().square().matrix().asDiagonal() * r.transpose();
}

ObjectPose ObjectPose::from_transform(const RigidTransform& t) {
    return {quaternion_from_rotation(t.rotation), t.translation};
}

// ---------------------------------------------------------------------------
// Sky
// ---------------------------------------------------------------------------

SkyModel::SkyModel() : SkyModel(32, 64, Vec3::Constant(0.5)) {}

SkyModel::SkyModel(int r, int c, const Vec3& fill) : rows(r), cols(c) {
    if (r <= 0 || c <= 0) {
        throw Error(ErrorCode::InvalidArgument, "sky resolution must be positive");
    }
    texels.assign(static_cast<std::size_t>(r) * c, fill);
}

SkySample SkyModel::lookup(const Vec3& direction) const {
    const Vec3 d = direction.normalized();
    const double phi = std::atan2(d.y(), d.x());
    const double theta = std::asin(std::clamp(d.z(), -1.0, 1.0));
    const double u = (phi + std::numbers::pi) / (2.0 * std::numbers::pi) * cols - 0.5;
    const double v = (0.5 * std::numbers::pi - theta) / std::numbers::pi * rows - 0.5;

    const double u0 = std::floor(u), v0 = std::floor(v);
    const double fu = u - u0, fv = v - v0;
    auto wrap = [&](long i) { return static_cast<std::size_t>(((i % cols) + cols) % cols); };
    auto clamp_row = [&](long j) { return static_cast<std::size_t>(std::clamp<long>(j, 0, rows - 1)); };
    const long iu = static_cast<long>(u0), iv = static_cast<long>(v0);

    SkySample s;
    const std::size_t c0 = wrap(iu), c1 = wrap(iu + 1), r0 = clamp_row(iv), r1 = clamp_row(iv + 1);
    s.texel = {r0 * cols + c0, r0 * cols + c1, r1 * cols + c0, r1 * cols + c1};
    s.weight = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
    return s;
}

Vec3 SkyModel::raw(const SkySample& s) const {
    Vec3 c = Vec3::Zero();
    for (int k = 0; k < 4; ++k) {
        c += s.weight[k] * texels[s.texel[k]];
    }
    return c;
}

Vec3 SkyModel::sample(const Vec3& direction) const {
    return raw(lookup(direction)).cwiseMax(0.0).cwiseMin(1.0);
}

// ---------------------------------------------------------------------------
// Scene graph
// ---------------------------------------------------------------------------

std::size_t SceneGraph::gaussian_count() const {
    std::size_t n = background.size();
    for (const auto& o : objects) {
        n += o.gaussians.size();
    }
    return n;
}

void SceneGraph::validate() const {
    if (frame_count < 1) {
        throw Error(ErrorCode::InvalidArgument, "scene frame_count must be >= 1");
    }
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
        throw Error(ErrorCode::InvalidArgument, "scene sh_degree out of range");
    }
    for (std::size_t o = 0; o < objects.size(); ++o) {
        if (static_cast<int>(objects[o].poses.size()) != frame_count) {
            throw Error(ErrorCode::InvalidArgument, "object " + std::to_string(o) + " needs one pose per frame");
        }
        for (const auto& p : objects[o].poses) {
            if (!(p.rotation.norm() > 0.0) || !p.transform().is_valid()) {
                throw Error(ErrorCode::InvalidArgument, "object " + std::to_string(o) + " has a non-rigid pose");
            }
        }
    }
    if (static_cast<std::size_t>(sky.rows) * sky.cols != sky.texels.size()) {
        throw Error(ErrorCode::InvalidArgument, "sky texel count does not match its resolution");
    }
}

void SceneGraph::assign_ids() {
    next_id = 0;
    for (auto& g : background) {
        g.id = next_id++;
    }
    for (auto& o : objects) {
        for (auto& g : o.gaussians) {
            g.id = next_id++;
        }
    }
}

std::vector<GaussianPrimitive> world_gaussians(const SceneGraph& scene, int frame,
                                               std::vector<GaussianSource>* sources) {
    if (frame < 0 || frame >= scene.frame_count) {
        throw Error(ErrorCode::FrameOutOfRange,
                    "frame " + std::to_string(frame) + " outside [0, " + std::to_string(scene.frame_count) + ")");
    }
    std::vector<GaussianPrimitive> out(scene.background.begin(), scene.background.end());
    if (sources) {
        sources->clear();
        for (std::size_t i = 0; i < scene.background.size(); ++i) {
            sources->push_back({-1, i});
        }
    }
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
        const auto& obj = scene.objects[o];
        const ObjectPose& pose = obj.poses.at(static_cast<std::size_t>(frame));
        const RigidTransform t = pose.transform();
        const Vec4 qo = normalize_quaternion(pose.rotation);
        for (std::size_t i = 0; i < obj.gaussians.size(); ++i) {
            GaussianPrimitive g = obj.gaussians[i];
            g.mean = t * g.mean;
            g.rotation = quaternion_multiply(qo, normalize_quaternion(g.rotation));
            out.push_back(g);
            if (sources) {
                sources->push_back({static_cast<int>(o), i});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

std::vector<FeatureSeed> feature_seeds(std::span<const CalibratedPoint> points, std::span<const FeatureLabel> labels) {
    if (labels.size() != points.size()) {
        throw Error(ErrorCode::DimensionMismatch, "labels must align with points");
    }
    std::vector<FeatureSeed> seeds;
    for (const auto& ring : group_rings(points)) {
        for (std::size_t r = 0; r < ring.size(); ++r) {
            const auto& label = labels[ring[r]];
            if (label.kind == FeatureKind::None) {
                continue;
            }
            const Vec3& p = points[ring[r]].position;
            const Vec3* prev = r > 0 ? &points[ring[r - 1]].position : nullptr;
            const Vec3* next = r + 1 < ring.size() ? &points[ring[r + 1]].position : nullptr;
            if (!prev && !next) {
                continue;
            }
            double spacing = 0.0;
            int n = 0;
            if (prev) {
                spacing += (p - *prev).norm();
                ++n;
            }
            if (next) {
                spacing += (*next - p).norm();
                ++n;
            }
            const Vec3 tangent = (next ? *next : p) - (prev ? *prev : p);
            if (!(tangent.norm() > 0.0)) {
                continue;
            }

            FeatureSeed s;
            s.position = p;
            s.kind = label.kind;
            s.spacing = std::max(spacing / n, kMinSpacing);
            s.reflectance = points[ring[r]].reflectance;
            s.direction = label.kind == FeatureKind::GeometricPlanar ? points[ring[r]].normal : tangent.normalized();
            seeds.push_back(s);
        }
    }
    return seeds;
}

std::vector<FeatureSeed> transform_seeds(std::span<const FeatureSeed> seeds, const RigidTransform& t) {
    std::vector<FeatureSeed> out(seeds.begin(), seeds.end());
    for (auto& s : out) {
        s.position = t * s.position;
        s.direction = t.rotation * s.direction;
    }
    return out;
}

std::vector<GaussianPrimitive> init_from_features(std::span<const FeatureSeed> seeds,
                                                  std::span<const SfmPoint> sfm_points, const InitConfig& config) {
    if (seeds.empty() && sfm_points.empty()) {
        throw Error(ErrorCode::EmptyInput, "no feature seeds or SfM points to initialize from");
    }
    const double opacity_logit = logit(config.initial_opacity);
    std::vector<GaussianPrimitive> out;
    out.reserve(seeds.size() + sfm_points.size());

    for (const auto& s : seeds) {
        GaussianPrimitive g;
        const double major = s.spacing;
        const double minor = s.spacing / config.salient_aspect;
        if (s.kind == FeatureKind::GeometricPlanar) {
            const Vec4 q = quaternion_from_rotation(frame_with_axis(s.direction, 2));
            g = config.salient ? GaussianPrimitive::planar_salient(s.position, q, major, minor)
                               : GaussianPrimitive::non_salient(s.position, q, Vec3(major, major, minor));
        } else {
            const Vec4 q = quaternion_from_rotation(frame_with_axis(s.direction, 0));
            g = config.salient ? GaussianPrimitive::edge_salient(s.position, q, major, minor)
                               : GaussianPrimitive::non_salient(s.position, q, Vec3(major, minor, minor));
        }
        g.opacity_logit = opacity_logit;
        g.reflectance_logit = config.seed_reflectance ? logit(std::clamp(s.reflectance, 0.01, 0.99)) : 0.0;
        out.push_back(g);
    }

    for (std::size_t i = 0; i < sfm_points.size(); ++i) {
        const Vec3& p = sfm_points[i].position;
        // mean distance to the nearest neighbors (brute force; SfM sets are sparse)
        std::vector<double> d;
        d.reserve(sfm_points.size());
        for (std::size_t j = 0; j < sfm_points.size(); ++j) {
            if (j != i) {
                d.push_back((sfm_points[j].position - p).norm());
            }
        }
        double scale = 0.05;
        if (!d.empty()) {
            const auto k = std::min<std::size_t>(static_cast<std::size_t>(config.sfm_neighbors), d.size());
            std::partial_sort(d.begin(), d.begin() + static_cast<long>(k), d.end());
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                sum += d[j];
            }
            scale = std::max(sum / static_cast<double>(k), kMinSpacing);
        }
        GaussianPrimitive g = GaussianPrimitive::non_salient(p, Vec4(1, 0, 0, 0), Vec3::Constant(scale));
        g.opacity_logit = opacity_logit;
        if (sfm_points[i].color) {
            g.sh[0] = sh_dc_from_rgb(*sfm_points[i].color);
        }
        out.push_back(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

PrimitiveGradient::PrimitiveGradient() = default;

PrimitiveGradient& PrimitiveGradient::operator+=(const PrimitiveGradient& o) {
    mean += o.mean;
    rotation += o.rotation;
    log_scales += o.log_scales;
    opacity_logit += o.opacity_logit;
    for (std::size_t k = 0; k < sh.size(); ++k) {
        sh[k] += o.sh[k];
    }
    reflectance_logit += o.reflectance_logit;
    return *this;
}

SceneGradient SceneGradient::zeros_like(const SceneGraph& scene) {
    SceneGradient g;
    g.background.resize(scene.background.size());
    for (const auto& o : scene.objects) {
        g.objects.emplace_back(o.gaussians.size());
        g.poses.emplace_back(o.poses.size());
    }
    g.sky.assign(scene.sky.texels.size(), Vec3::Zero());
    return g;
}

SceneGradient& SceneGradient::operator+=(const SceneGradient& o) {
    for (std::size_t i = 0; i < background.size(); ++i) background[i] += o.background[i];
    for (std::size_t k = 0; k < objects.size(); ++k) {
        for (std::size_t i = 0; i < objects[k].size(); ++i) objects[k][i] += o.objects[k][i];
        for (std::size_t f = 0; f < poses[k].size(); ++f) {
            poses[k][f].rotation += o.poses[k][f].rotation;
            poses[k][f].translation += o.poses[k][f].translation;
        }
    }
    for (std::size_t t = 0; t < sky.size(); ++t) sky[t] += o.sky[t];
    return *this;
}

CovarianceGradient covariance_backward(const GaussianPrimitive& g, const Mat3& rotation, const Mat3& dl_dcov) {
    const Mat3 gs = 0.5 * (dl_dcov + dl_dcov.transpose());
    const Vec3 s = g.scales();
    const Vec3 s2 = s.array().square().matrix();

    CovarianceGradient out;
    out.rotation = 2.0 * gs * rotation * s2.asDiagonal();
    const Mat3 m = rotation.transpose() * gs * rotation;
    const Vec3 axis(2.0 * s2[0] * m(0, 0), 2.0 * s2[1] * m(1, 1), 2.0 * s2[2] * m(2, 2));
    switch (g.kind) {
    case SalienceKind::EdgeSalient: out.log_scales = Vec3(axis[0], axis[1] + axis[2], 0.0); break;
    case SalienceKind::PlanarSalient: out.log_scales = Vec3(axis[0] + axis[1], axis[2], 0.0); break;
    default: out.log_scales = axis; break;
    }
    return out;
}

void accumulate_scene_gradient(const SceneGraph& scene, int frame, std::span<const GaussianSource> sources,
                               std::span<const WorldGaussianGradient> world, std::span<const Vec3> sky,
                               SceneGradient& out) {
    if (sources.size() != world.size()) {
        throw Error(ErrorCode::DimensionMismatch, "gradient sources do not match world gradients");
    }
    std::vector<Mat3> pose_rot(scene.objects.size(), Mat3::Zero());
    std::vector<Vec3> pose_trans(scene.objects.size(), Vec3::Zero());

    for (std::size_t i = 0; i < world.size(); ++i) {
        const auto& src = sources[i];
        const auto& w = world[i];
        if (src.node < 0) {
            const GaussianPrimitive& g = scene.background[src.index];
            const Mat3 r = g.rotation_matrix();
            const auto cg = covariance_backward(g, r, w.covariance);
            PrimitiveGradient& pg = out.background[src.index];
            pg.mean += w.mean;
            pg.rotation += quaternion_backward(g.rotation, cg.rotation);
            pg.log_scales += cg.log_scales;
            add_world_terms(pg, w);
        } else {
            const auto o = static_cast<std::size_t>(src.node);
            const RigidObject& obj = scene.objects[o];
            const GaussianPrimitive& g = obj.gaussians[src.index];
            const Mat3 ro = rotation_from_quaternion(obj.poses[static_cast<std::size_t>(frame)].rotation);
            const Mat3 rl = g.rotation_matrix();
            const auto cg = covariance_backward(g, ro * rl, w.covariance);
            PrimitiveGradient& pg = out.objects[o][src.index];
            pg.mean += ro.transpose() * w.mean;
            pg.rotation += quaternion_backward(g.rotation, ro.transpose() * cg.rotation);
            pg.log_scales += cg.log_scales;
            add_world_terms(pg, w);
            pose_rot[o] += cg.rotation * rl.transpose() + w.mean * g.mean.transpose();
            pose_trans[o] += w.mean;
        }
    }
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
        auto& pg = out.poses[o][static_cast<std::size_t>(frame)];
        pg.rotation += quaternion_backward(scene.objects[o].poses[static_cast<std::size_t>(frame)].rotation, pose_rot[o]);
        pg.translation += pose_trans[o];
    }
    for (std::size_t t = 0; t < sky.size() && t < out.sky.size(); ++t) {
        out.sky[t] += sky[t];
    }
}

int primitive_parameter_count(const GaussianPrimitive& g, int sh_degree) {
    return 3 + 4 + scale_dof(g.kind) + 1 + 3 * sh_coeff_count(sh_degree) + 1;
}

} // namespace lrsgs
