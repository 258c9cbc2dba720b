#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lrsgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Failure categories surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorCode {
    DegenerateNeighborhood,
    EmptySweep,
    InsufficientNeighbors,
    EmptyInput,
    FrameOutOfRange,
    OracleTooLarge,
    DimensionMismatch,
    NonFiniteLoss,
    InvalidArgument,
    Io,
    Format,
    Config,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

} // namespace lrsgs
