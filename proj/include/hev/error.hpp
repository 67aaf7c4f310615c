#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hev {

enum class ErrorKind {
    PowerInfeasible,
    SocOutOfBounds,
    MapFormat,
    ParseError,
    NonPositiveDuration,
    VelocityOutOfRange,
    InvalidInitialSoc,
    SteppedAfterDone,
    EpisodeNotFinished,
    ShapeMismatch,
    NonFiniteLoss,
    BufferTooSmall,
    AgentCountMismatch,
    GridTooLarge,
    DegenerateCovariance,
    IdenticalSettings,
    ZeroInitialSoc,
    ZeroBaseline,
    InvalidArgument,
    Config,
    Io,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a machine-readable kind; the
// CLI prints it and maps it to a nonzero exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace hev
