#include "angdist/error.hpp"

namespace angdist {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SoftLabelsUnsupported: return "SoftLabelsUnsupported";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InconsistentWidth: return "InconsistentWidth";
    case ErrorCode::UnknownLabelColumn: return "UnknownLabelColumn";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InfeasibleGeometry: return "InfeasibleGeometry";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::ConfigConflict: return "ConfigConflict";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace angdist
