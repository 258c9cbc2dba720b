#pragma once

#include "lrsgs/common.hpp"
#include "lrsgs/feature_extraction.hpp"
#include "lrsgs/sh.hpp"
#include "lrsgs/transform.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lrsgs {

enum class SalienceKind : std::uint8_t {
    NonSalient = 0,
    /// Elongated: dominant axis is rotation column 0, log_scales = (log sigma_par, log sigma_perp).
    EdgeSalient = 1,
    /// Flattened: dominant axis is rotation column 2, log_scales = (log sigma_perp, log sigma_par).
    PlanarSalient = 2,
};

const char* to_string(SalienceKind kind);

/// Number of free scale parameters for a salience kind.
constexpr int scale_dof(SalienceKind kind) { return kind == SalienceKind::NonSalient ? 3 : 2; }

/// The optimizable scene atom.
struct GaussianPrimitive {
    Vec3 mean = Vec3::Zero();
    /// (w, x, y, z), unit after every optimizer step.
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    SalienceKind kind = SalienceKind::NonSalient;
    /// Only the first scale_dof(kind) entries are parameters; the rest stay zero.
    Vec3 log_scales = Vec3::Zero();
    double opacity_logit = 0.0;
    ShCoeffs sh = zero_sh();
    double reflectance_logit = 0.0;
    /// Consecutive qualifying shape evaluations toward an upgrade or downgrade.
    std::int8_t transform_counter = 0;
    std::uint64_t id = 0;

    double opacity() const { return sigmoid(opacity_logit); }
    double reflectance() const { return sigmoid(reflectance_logit); }
    /// Per-axis standard deviations in the rotation frame.
    Vec3 scales() const;
    Mat3 rotation_matrix() const { return rotation_from_quaternion(rotation); }
    /// Unit dominant direction for salient kinds, nullopt for NonSalient.
    std::optional<Vec3> dominant_direction() const;

    static GaussianPrimitive non_salient(const Vec3& mean, const Vec4& rotation, const Vec3& scales);
    static GaussianPrimitive edge_salient(const Vec3& mean, const Vec4& rotation, double sigma_par, double sigma_perp);
    static GaussianPrimitive planar_salient(const Vec3& mean, const Vec4& rotation, double sigma_perp,
                                            double sigma_par);
};

/// R diag(scales^2) R^T according to the salience kind.
Mat3 covariance(const GaussianPrimitive& g);

/// Optimizable rigid pose, object -> world.
struct ObjectPose {
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 translation = Vec3::Zero();

    RigidTransform transform() const { return RigidTransform::from_quaternion(rotation, translation); }
    static ObjectPose from_transform(const RigidTransform& t);
};

struct RigidObject {
    std::vector<GaussianPrimitive> gaussians;
    /// One pose per frame.
    std::vector<ObjectPose> poses;
    /// Full box size in the object frame.
    Vec3 bbox = Vec3::Ones();
};

/// Bilinear lookup footprint into the sky grid.
struct SkySample {
    std::array<std::size_t, 4> texel{};
    std::array<double, 4> weight{};
};

/// Equirectangular RGB grid indexed by world view direction (+z up).
struct SkyModel {
    int rows = 32;
    int cols = 64;
    std::vector<Vec3> texels;

    SkyModel();
    SkyModel(int rows, int cols, const Vec3& fill);

    SkySample lookup(const Vec3& direction) const;
    Vec3 raw(const SkySample& s) const;
    /// Clamped to [0, 1] per channel.
    Vec3 sample(const Vec3& direction) const;
};

struct SceneGraph {
    std::vector<GaussianPrimitive> background;
    std::vector<RigidObject> objects;
    SkyModel sky;
    int frame_count = 1;
    int sh_degree = kMaxShDegree;
    std::uint64_t next_id = 0;

    std::size_t gaussian_count() const;
    /// Throws InvalidArgument when an object lacks a pose per frame or a pose is not rigid.
    void validate() const;
    /// Renumbers every primitive id from 0 and resets next_id.
    void assign_ids();
};

/// Which node a flattened world-frame primitive came from.
struct GaussianSource {
    /// -1 for background, otherwise object index.
    int node = -1;
    std::size_t index = 0;
};

/// Background plus every object's primitives composed with that frame's pose.
/// Throws FrameOutOfRange.
std::vector<GaussianPrimitive> world_gaussians(const SceneGraph& scene, int frame,
                                               std::vector<GaussianSource>* sources = nullptr);

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// A labeled LiDAR point with the local ring geometry needed to seed a primitive.
struct FeatureSeed {
    Vec3 position = Vec3::Zero();
    FeatureKind kind = FeatureKind::None;
    /// Ring tangent for edge kinds, surface normal for planar.
    Vec3 direction = Vec3::UnitX();
    double spacing = 0.0;
    double reflectance = 0.5;
};

struct SfmPoint {
    Vec3 position = Vec3::Zero();
    std::optional<Vec3> color;
};

/// Seeds for every labeled point (kind != None). Needs same-ring neighbors for tangent and spacing.
std::vector<FeatureSeed> feature_seeds(std::span<const CalibratedPoint> points, std::span<const FeatureLabel> labels);

/// Moves seeds into another frame (positions and directions).
std::vector<FeatureSeed> transform_seeds(std::span<const FeatureSeed> seeds, const RigidTransform& t);

struct InitConfig {
    double initial_opacity = 0.1;
    /// sigma_perp / sigma_par for edges (and the inverse for planes).
    double salient_aspect = 4.0;
    /// When false, feature seeds become NonSalient primitives with the same shape.
    bool salient = true;
    /// When false, every primitive starts at reflectance 0.5 regardless of LiDAR.
    bool seed_reflectance = true;
    int sfm_neighbors = 3;
};

/// Salient primitives from feature seeds and NonSalient ones from SfM points. Throws EmptyInput.
std::vector<GaussianPrimitive> init_from_features(std::span<const FeatureSeed> seeds,
                                                  std::span<const SfmPoint> sfm_points,
                                                  const InitConfig& config = {});

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Loss gradient with respect to one world-frame primitive, before the scale/rotation chain.
struct WorldGaussianGradient {
    Vec3 mean = Vec3::Zero();
    Mat3 covariance = Mat3::Zero();
    ShCoeffs sh = zero_sh();
    double opacity_logit = 0.0;
    double reflectance_logit = 0.0;
};

/// Same layout as GaussianPrimitive's parameters.
struct PrimitiveGradient {
    Vec3 mean = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    Vec3 log_scales = Vec3::Zero();
    double opacity_logit = 0.0;
    ShCoeffs sh = zero_sh();
    double reflectance_logit = 0.0;

    PrimitiveGradient();
    PrimitiveGradient& operator+=(const PrimitiveGradient& o);
};

struct PoseGradient {
    Vec4 rotation = Vec4::Zero();
    Vec3 translation = Vec3::Zero();
};

struct SceneGradient {
    std::vector<PrimitiveGradient> background;
    std::vector<std::vector<PrimitiveGradient>> objects;
    std::vector<std::vector<PoseGradient>> poses;
    std::vector<Vec3> sky;

    static SceneGradient zeros_like(const SceneGraph& scene);
    SceneGradient& operator+=(const SceneGradient& o);
};

/// dL/dR and dL/d(log-scales) from dL/dSigma for a primitive with rotation matrix `rotation`.
struct CovarianceGradient {
    Mat3 rotation = Mat3::Zero();
    Vec3 log_scales = Vec3::Zero();
};

CovarianceGradient covariance_backward(const GaussianPrimitive& g, const Mat3& rotation, const Mat3& dl_dcov);

/// Chains world-frame gradients back to node-local primitives and object poses of `frame`.
void accumulate_scene_gradient(const SceneGraph& scene, int frame, std::span<const GaussianSource> sources,
                               std::span<const WorldGaussianGradient> world, std::span<const Vec3> sky,
                               SceneGradient& out);

// ---------------------------------------------------------------------------
// Parameter enumeration
// ---------------------------------------------------------------------------

enum class ParamGroup : std::uint8_t {
    Mean,
    Rotation,
    EdgeScales,
    PlanarScales,
    NonSalientScales,
    Opacity,
    Sh,
    Reflectance,
    Sky,
    ObjectPose,
};

inline constexpr int kParamGroupCount = 10;

const char* to_string(ParamGroup group);

inline ParamGroup scale_group(SalienceKind kind) {
    switch (kind) {
    case SalienceKind::EdgeSalient: return ParamGroup::EdgeScales;
    case SalienceKind::PlanarSalient: return ParamGroup::PlanarScales;
    default: return ParamGroup::NonSalientScales;
    }
}

namespace detail {

template <class Fn>
void visit_primitive(GaussianPrimitive& g, PrimitiveGradient& d, int sh_degree, Fn& fn) {
    for (int i = 0; i < 3; ++i) fn(ParamGroup::Mean, g.mean[i], d.mean[i]);
    for (int i = 0; i < 4; ++i) fn(ParamGroup::Rotation, g.rotation[i], d.rotation[i]);
    const ParamGroup sg = scale_group(g.kind);
    for (int i = 0; i < scale_dof(g.kind); ++i) fn(sg, g.log_scales[i], d.log_scales[i]);
    fn(ParamGroup::Opacity, g.opacity_logit, d.opacity_logit);
    for (int k = 0; k < sh_coeff_count(sh_degree); ++k) {
        for (int c = 0; c < 3; ++c) fn(ParamGroup::Sh, g.sh[k][c], d.sh[k][c]);
    }
    fn(ParamGroup::Reflectance, g.reflectance_logit, d.reflectance_logit);
}

} // namespace detail

/// Calls fn(group, parameter&, gradient&) for every optimizable scalar in a fixed order.
/// `grad` must have the shape of `scene` (SceneGradient::zeros_like).
template <class Fn>
void visit_parameters(SceneGraph& scene, SceneGradient& grad, Fn&& fn) {
    for (std::size_t i = 0; i < scene.background.size(); ++i) {
        detail::visit_primitive(scene.background[i], grad.background[i], scene.sh_degree, fn);
    }
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
        auto& obj = scene.objects[o];
        for (std::size_t i = 0; i < obj.gaussians.size(); ++i) {
            detail::visit_primitive(obj.gaussians[i], grad.objects[o][i], scene.sh_degree, fn);
        }
        for (std::size_t f = 0; f < obj.poses.size(); ++f) {
            for (int i = 0; i < 4; ++i) fn(ParamGroup::ObjectPose, obj.poses[f].rotation[i], grad.poses[o][f].rotation[i]);
            for (int i = 0; i < 3; ++i)
                fn(ParamGroup::ObjectPose, obj.poses[f].translation[i], grad.poses[o][f].translation[i]);
        }
    }
    for (std::size_t t = 0; t < scene.sky.texels.size(); ++t) {
        for (int c = 0; c < 3; ++c) fn(ParamGroup::Sky, scene.sky.texels[t][c], grad.sky[t][c]);
    }
}

/// Parameter count of a single primitive at the given SH degree.
int primitive_parameter_count(const GaussianPrimitive& g, int sh_degree);

} // namespace lrsgs
