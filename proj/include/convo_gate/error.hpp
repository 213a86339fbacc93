#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace convo_gate {

enum class ErrorKind {
    InvalidArgument,
    Precondition,
    SchemaMismatch,
    Range,
    UnlabeledTurn,
    Io,
    Parse,
    Coverage,
    Domain,
    Duplicate,
    Transport,
    Backend,
    UndefinedReport,
    Forwarding,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::Precondition: return "precondition";
        case ErrorKind::SchemaMismatch: return "schema-mismatch";
        case ErrorKind::Range: return "range";
        case ErrorKind::UnlabeledTurn: return "unlabeled-turn";
        case ErrorKind::Io: return "io";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Coverage: return "coverage";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Duplicate: return "duplicate";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Backend: return "backend";
        case ErrorKind::UndefinedReport: return "undefined-report";
        case ErrorKind::Forwarding: return "forwarding";
    }
    return "unknown";
}

/// Every failure raised by the library. `context()` carries auxiliary data
/// such as the raw teacher response or the offending record.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string context = {})
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind),
          context_(std::move(context)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& context() const noexcept { return context_; }

private:
    ErrorKind kind_;
    std::string context_;
};

}  // namespace convo_gate
