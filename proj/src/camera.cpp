#include "lrsgs/camera.hpp"

namespace lrsgs {

Mat3 Intrinsics::matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
}

void CameraModel::validate() const {
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "camera focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw Error(ErrorCode::InvalidArgument, "camera size must be positive");
    }
    if (!extrinsics.is_valid()) {
        throw Error(ErrorCode::InvalidArgument, "camera extrinsics are not a rigid transform");
    }
}

std::optional<Vec2> CameraModel::project(const Vec3& pc) const {
    if (!(pc.z() > 0.0)) {
        return std::nullopt;
    }
    return Vec2(intrinsics.fx * pc.x() / pc.z() + intrinsics.cx, intrinsics.fy * pc.y() / pc.z() + intrinsics.cy);
}

Vec3 CameraModel::unproject(double u, double v, double z) const {
    return {(u - intrinsics.cx) / intrinsics.fx * z, (v - intrinsics.cy) / intrinsics.fy * z, z};
}

Vec3 CameraModel::center() const { return -(extrinsics.rotation.transpose() * extrinsics.translation); }

Vec3 CameraModel::ray_direction(double u, double v) const {
    return (extrinsics.rotation.transpose() * unproject(u, v, 1.0)).normalized();
}

} // namespace lrsgs
