#pragma once

#include "lrsgs/common.hpp"

namespace lrsgs {

/// Rigid motion x -> R x + t. Used for sensor extrinsics, camera poses and object trajectories.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }
    /// Quaternion in (w, x, y, z) order; normalized before use.
    static RigidTransform from_quaternion(const Vec4& q, const Vec3& t);

    Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform operator*(const RigidTransform& rhs) const;
    RigidTransform inverse() const;

    /// Orthonormal rotation with det +1 within `tolerance`.
    bool is_valid(double tolerance = 1e-6) const;
};

// Quaternions are stored as Vec4 in (w, x, y, z) order throughout the library.

Vec4 normalize_quaternion(const Vec4& q);
Mat3 rotation_from_quaternion(const Vec4& q);
Vec4 quaternion_from_rotation(const Mat3& r);
Vec4 quaternion_multiply(const Vec4& a, const Vec4& b);
Vec4 quaternion_from_axis_angle(const Vec3& axis, double angle);

/// Pulls dL/dR (R built from the normalized quaternion) back to the raw, unnormalized quaternion.
Vec4 quaternion_backward(const Vec4& q_raw, const Mat3& dl_drot);

/// Right-handed orthonormal basis whose column `axis` equals `direction`.
Mat3 frame_with_axis(const Vec3& direction, int axis);

} // namespace lrsgs
