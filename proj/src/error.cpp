#include "latent_audit/error.hpp"

namespace latent_audit {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "Io";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::Truncated: return "Truncated";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::ZeroVector: return "ZeroVector";
        case ErrorKind::KTooLarge: return "KTooLarge";
        case ErrorKind::AlphaDegenerate: return "AlphaDegenerate";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::NegativeInput: return "NegativeInput";
        case ErrorKind::EmptyClass: return "EmptyClass";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::ConstantInput: return "ConstantInput";
        case ErrorKind::DegenerateN: return "DegenerateN";
        case ErrorKind::PerfectCorrelation: return "PerfectCorrelation";
        case ErrorKind::TooFewInstances: return "TooFewInstances";
        case ErrorKind::HashMismatch: return "HashMismatch";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace latent_audit
