#pragma once

#include "lrsgs/common.hpp"
#include "lrsgs/transform.hpp"

#include <optional>

namespace lrsgs {

/// Zero-skew pinhole intrinsics in pixels.
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    Mat3 matrix() const;
};

/// Pinhole camera. `extrinsics` maps the reference frame (LiDAR for supervision
/// projection, world for rendering) into the camera frame.
///
/// Pixel (x, y) has its center at image coordinate (x, y).
struct CameraModel {
    Intrinsics intrinsics;
    RigidTransform extrinsics;
    int width = 0;
    int height = 0;

    /// Throws InvalidArgument on non-positive focal lengths, sizes, or a non-rigid extrinsic.
    void validate() const;

    Vec3 to_camera(const Vec3& p) const { return extrinsics * p; }
    /// Image coordinates of a camera-frame point; nullopt when z <= 0.
    std::optional<Vec2> project(const Vec3& camera_point) const;
    /// Camera-frame point at depth z along the ray through (u, v).
    Vec3 unproject(double u, double v, double z) const;
    /// Camera center in the reference frame.
    Vec3 center() const;
    /// Unit ray through (u, v), expressed in the reference frame.
    Vec3 ray_direction(double u, double v) const;
};

} // namespace lrsgs
