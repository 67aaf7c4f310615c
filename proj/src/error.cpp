#include "hev/error.hpp"

namespace hev {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::PowerInfeasible: return "PowerInfeasible";
        case ErrorKind::SocOutOfBounds: return "SocOutOfBounds";
        case ErrorKind::MapFormat: return "MapFormatError";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::NonPositiveDuration: return "NonPositiveDuration";
        case ErrorKind::VelocityOutOfRange: return "VelocityOutOfRange";
        case ErrorKind::InvalidInitialSoc: return "InvalidInitialSoc";
        case ErrorKind::SteppedAfterDone: return "SteppedAfterDone";
        case ErrorKind::EpisodeNotFinished: return "EpisodeNotFinished";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::BufferTooSmall: return "BufferTooSmall";
        case ErrorKind::AgentCountMismatch: return "AgentCountMismatch";
        case ErrorKind::GridTooLarge: return "GridTooLarge";
        case ErrorKind::DegenerateCovariance: return "DegenerateCovariance";
        case ErrorKind::IdenticalSettings: return "IdenticalSettings";
        case ErrorKind::ZeroInitialSoc: return "ZeroInitialSoc";
        case ErrorKind::ZeroBaseline: return "ZeroBaseline";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Config: return "ConfigError";
        case ErrorKind::Io: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace hev
