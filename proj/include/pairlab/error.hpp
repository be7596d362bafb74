#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pairlab {

enum class ErrorKind {
    MalformedLine,
    BadIndex,
    BadTag,
    Io,
    InvalidSpec,
    NoCandidate,
    BadSpan,
    DimMismatch,
    EmptyDescription,
    NoTriplets,
    DegenerateBatch,
    NumericalError,
    IndexOutOfRange,
    ShapeMismatch,
    NonFiniteGradient,
    EmptyDataset,
    NonFiniteLoss,
    AlignmentError,
    DegenerateCovariance,
    BadCheckpoint,
    InvalidConfig,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::BadTag: return "BadTag";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::NoCandidate: return "NoCandidate";
    case ErrorKind::BadSpan: return "BadSpan";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyDescription: return "EmptyDescription";
    case ErrorKind::NoTriplets: return "NoTriplets";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` carries the failure class
/// so callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

/// True for failures caused by bad numbers rather than bad input data.
constexpr bool is_numeric(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::NumericalError:
    case ErrorKind::NonFiniteGradient:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::DegenerateCovariance:
        return true;
    default:
        return false;
    }
}

} // namespace pairlab
