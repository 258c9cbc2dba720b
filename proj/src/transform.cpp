#include "lrsgs/transform.hpp"

#include <cmath>

namespace lrsgs {

RigidTransform RigidTransform::from_quaternion(const Vec4& q, const Vec3& t) {
    return {rotation_from_quaternion(q), t};
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
}

RigidTransform RigidTransform::inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
}

bool RigidTransform::is_valid(double tolerance) const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        return false;
    }
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tolerance && std::abs(rotation.determinant() - 1.0) <= tolerance;
}

Vec4 normalize_quaternion(const Vec4& q) {
    const double n = q.norm();
    if (!(n > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "zero-norm quaternion");
    }
    return q / n;
}

Mat3 rotation_from_quaternion(const Vec4& q_raw) {
    const Vec4 q = normalize_quaternion(q_raw);
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Vec4 quaternion_from_rotation(const Mat3& r) {
    const Eigen::Quaterniond q(r);
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    // canonical hemisphere keeps serialization stable
    if (out[0] < 0.0) {
        out = -out;
    }
    return out.normalized();
}

Vec4 quaternion_multiply(const Vec4& a, const Vec4& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Vec4 quaternion_from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s};
}

Vec4 quaternion_backward(const Vec4& q_raw, const Mat3& g) {
    const double n = q_raw.norm();
    const Vec4 q = q_raw / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];

    Mat3 dw, dx, dy, dz;
    dw << 0, -z, y, z, 0, -x, -y, x, 0;
    dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;

    const Vec4 dq(2.0 * (g.cwiseProduct(dw)).sum(), 2.0 * (g.cwiseProduct(dx)).sum(),
                  2.0 * (g.cwiseProduct(dy)).sum(), 2.0 * (g.cwiseProduct(dz)).sum());
    return (dq - q * q.dot(dq)) / n;
}

Mat3 frame_with_axis(const Vec3& direction, int axis) {
    const Vec3 d = direction.normalized();
    // pick the world axis least aligned with d as a seed
    Eigen::Index least = 0;
    d.cwiseAbs().minCoeff(&least);
    const Vec3 seed = Vec3::Unit(least);
    const Vec3 a = (seed - d * d.dot(seed)).normalized();
    const Vec3 b = d.cross(a);

    Mat3 r;
    switch (axis) {
    case 0: r << d, a, b; break;
    case 1: r << b, d, a; break;
    default: r << a, b, d; break;
    }
    return r;
}

} // namespace lrsgs
