#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rpge {

enum class ErrorCode {
    ZeroRange,
    ZeroQuaternion,
    SingularAugmentation,
    FeatureLengthMismatch,
    WidthMismatch,
    ShapeMismatch,
    NotPositiveDefinite,
    PlacementFailure,
    Format,
    Io,
    Config,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ZeroRange: return "ZeroRange";
    case ErrorCode::ZeroQuaternion: return "ZeroQuaternion";
    case ErrorCode::SingularAugmentation: return "SingularAugmentation";
    case ErrorCode::FeatureLengthMismatch: return "FeatureLengthMismatch";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::Format: return "Format";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string &message) {
    if (!condition) {
        throw Error(code, message);
    }
}

} // namespace rpge
