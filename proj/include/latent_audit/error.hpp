#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latent_audit {

enum class ErrorKind {
    Io,
    BadMagic,
    Truncated,
    NonFinite,
    ZeroVector,
    KTooLarge,
    AlphaDegenerate,
    DimensionMismatch,
    EmptyInput,
    NegativeInput,
    EmptyClass,
    NonFiniteLoss,
    ShapeMismatch,
    LengthMismatch,
    ConstantInput,
    DegenerateN,
    PerfectCorrelation,
    TooFewInstances,
    HashMismatch,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind. The CLI maps `Io` to exit
/// code 1 and every other kind to exit code 2.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace latent_audit
