#pragma once

#include <stdexcept>
#include <string>

namespace rslq {

/// Failure classes raised by the library. The CLI maps the category of each
/// kind onto a process exit code.
enum class ErrorKind {
    // validation
    DimensionMismatch,
    NegativeOffDiagonal,
    AsymmetricWeight,
    BadSegments,
    OutOfHorizon,
    InvalidArgument,
    EmptySample,
    BadConfig,
    // numerical
    SingularRhat,
    NonFiniteState,
    IllConditionedRegression,
    NegativeRhat,
    NonPositiveP,
    DegenerateConstraint,
};

enum class ErrorCategory { Validation, Numerical };

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NegativeOffDiagonal: return "NegativeOffDiagonal";
    case ErrorKind::AsymmetricWeight: return "AsymmetricWeight";
    case ErrorKind::BadSegments: return "BadSegments";
    case ErrorKind::OutOfHorizon: return "OutOfHorizon";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::SingularRhat: return "SingularRhat";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::IllConditionedRegression: return "IllConditionedRegression";
    case ErrorKind::NegativeRhat: return "NegativeRhat";
    case ErrorKind::NonPositiveP: return "NonPositiveP";
    case ErrorKind::DegenerateConstraint: return "DegenerateConstraint";
    }
    return "Unknown";
}

inline ErrorCategory category_of(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::SingularRhat:
    case ErrorKind::NonFiniteState:
    case ErrorKind::IllConditionedRegression:
    case ErrorKind::NegativeRhat:
    case ErrorKind::NonPositiveP:
    case ErrorKind::DegenerateConstraint:
        return ErrorCategory::Numerical;
    default:
        return ErrorCategory::Validation;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }
    ErrorCategory category() const noexcept { return category_of(kind_); }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

} // namespace rslq
