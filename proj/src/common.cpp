#include "lrsgs/common.hpp"

namespace lrsgs {

const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DegenerateNeighborhood: return "DegenerateNeighborhood";
    case ErrorCode::EmptySweep: return "EmptySweep";
    case ErrorCode::InsufficientNeighbors: return "InsufficientNeighbors";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::FrameOutOfRange: return "FrameOutOfRange";
    case ErrorCode::OracleTooLarge: return "OracleTooLarge";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
    case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

} // namespace lrsgs
