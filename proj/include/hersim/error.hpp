#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hersim {

enum class Errc {
    OutOfRange,
    ModelUnderspecified,
    NonPositiveSlope,
    DegenerateGvm,
    EmptyScan,
    NoIntersection,
    NonPositiveLength,
    SvdFailure,
    EmptyOverlap,
    TruncationUnconverged,
    IndexOutOfRange,
    MismatchedBases,
    BasisMissingMode,
    ConstraintViolation,
    EmptyCurve,
    InvalidArgument,
    ConfigError,
    IoError,
};

inline std::string_view to_string(Errc code)
{
    switch (code) {
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::ModelUnderspecified: return "ModelUnderspecified";
    case Errc::NonPositiveSlope: return "NonPositiveSlope";
    case Errc::DegenerateGvm: return "DegenerateGvm";
    case Errc::EmptyScan: return "EmptyScan";
    case Errc::NoIntersection: return "NoIntersection";
    case Errc::NonPositiveLength: return "NonPositiveLength";
    case Errc::SvdFailure: return "SvdFailure";
    case Errc::EmptyOverlap: return "EmptyOverlap";
    case Errc::TruncationUnconverged: return "TruncationUnconverged";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::MismatchedBases: return "MismatchedBases";
    case Errc::BasisMissingMode: return "BasisMissingMode";
    case Errc::ConstraintViolation: return "ConstraintViolation";
    case Errc::EmptyCurve: return "EmptyCurve";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error
{
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what)
{
    if (!condition) fail(code, what);
}

}  // namespace hersim
