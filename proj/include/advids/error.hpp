#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace advids {

enum class ErrorKind {
    EmptyDataset,
    TooFewInstances,
    OutOfRange,
    DegenerateData,
    DegenerateLabels,
    InvalidHyperparams,
    DimensionMismatch,
    NoAdversarialInstances,
    TotalConflict,
    DegenerateDenominator,
    MissingColumn,
    UnreadableFile,
    InvalidSpec,
    InvalidConfig,
    IoFailure,
    InvariantViolation,
};

constexpr std::string_view to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::TooFewInstances: return "TooFewInstances";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::InvalidHyperparams: return "InvalidHyperparams";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NoAdversarialInstances: return "NoAdversarialInstances";
    case ErrorKind::TotalConflict: return "TotalConflict";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::UnreadableFile: return "UnreadableFile";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Process exit code for the CLI: 1 config, 2 data, 3 internal invariant.
constexpr int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::InvalidHyperparams:
    case ErrorKind::InvalidSpec:
    case ErrorKind::InvalidConfig:
        return 1;
    case ErrorKind::TotalConflict:
    case ErrorKind::DegenerateDenominator:
    case ErrorKind::InvariantViolation:
        return 3;
    default:
        return 2;
    }
}

} // namespace advids
