#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mgslam {

enum class ErrorCode {
    NonPositiveDepth,
    NonPositiveInverseDepth,
    DegenerateConfiguration,
    DimensionMismatch,
    BehindCamera,
    SingularSystem,
    ZeroVector,
    DuplicateId,
    UnknownKeyframe,
    EmptyStore,
    RecencyViolation,
    NoAssociations,
    InvalidSpec,
    MalformedIndex,
    MissingImage,
    IoError,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code. All library failures throw this.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mgslam
