#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace setmap {

enum class ErrorCode {
    InvalidArgument,
    Io,
    BadMagic,
    TruncatedPayload,
    LengthMismatch,
    DegenerateRing,
    GridMismatch,
    UnsupportedResolution,
    ExtentMismatch,
    NoScenes,
    UnknownIndex,
    MissingEpoch,
    InsufficientGrids,
    InsufficientPixels,
    DuplicatePixel,
    SingleClass,
    NonFinite,
    FeatureMismatch,
    VersionMismatch,
    CorruptModel,
    SingleMunicipality,
    NoPositives,
    EmptyGroup,
    NoValidPixels,
    Validation,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::TruncatedPayload: return "truncated payload";
    case ErrorCode::LengthMismatch: return "header/payload length mismatch";
    case ErrorCode::DegenerateRing: return "degenerate ring";
    case ErrorCode::GridMismatch: return "grid mismatch";
    case ErrorCode::UnsupportedResolution: return "unsupported resolution";
    case ErrorCode::ExtentMismatch: return "extent mismatch";
    case ErrorCode::NoScenes: return "no scenes";
    case ErrorCode::UnknownIndex: return "unknown index";
    case ErrorCode::MissingEpoch: return "missing epoch";
    case ErrorCode::InsufficientGrids: return "insufficient grids";
    case ErrorCode::InsufficientPixels: return "insufficient pixels";
    case ErrorCode::DuplicatePixel: return "duplicate pixel";
    case ErrorCode::SingleClass: return "single class";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::FeatureMismatch: return "feature mismatch";
    case ErrorCode::VersionMismatch: return "version mismatch";
    case ErrorCode::CorruptModel: return "corrupt model";
    case ErrorCode::SingleMunicipality: return "single municipality";
    case ErrorCode::NoPositives: return "no positives";
    case ErrorCode::EmptyGroup: return "empty group";
    case ErrorCode::NoValidPixels: return "no valid pixels";
    case ErrorCode::Validation: return "validation error";
    }
    return "unknown error";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace setmap
