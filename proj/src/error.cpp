#include "alchemist/error.hpp"

namespace alchemist {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidGrid: return "invalid-grid";
        case ErrorCode::kInvalidLayout: return "invalid-layout";
        case ErrorCode::kNotLocal: return "not-local";
        case ErrorCode::kInvalidPartitioning: return "invalid-partitioning";
        case ErrorCode::kFrameTooLarge: return "frame-too-large";
        case ErrorCode::kIncompleteFrame: return "incomplete-frame";
        case ErrorCode::kVersionMismatch: return "version-mismatch";
        case ErrorCode::kInvalidBuffer: return "invalid-buffer";
        case ErrorCode::kDecode: return "decode-error";
        case ErrorCode::kUnknownCommand: return "unknown-command";
        case ErrorCode::kBind: return "bind-error";
        case ErrorCode::kConnection: return "connection-error";
        case ErrorCode::kOutOfWorkers: return "out-of-workers";
        case ErrorCode::kLibraryNotFound: return "library-not-found";
        case ErrorCode::kStaleSession: return "stale-session";
        case ErrorCode::kStaleHandle: return "stale-handle";
        case ErrorCode::kOwnershipViolation: return "ownership-violation";
        case ErrorCode::kNotReady: return "not-ready";
        case ErrorCode::kUnknownFunction: return "unknown-function";
        case ErrorCode::kBadArguments: return "bad-arguments";
        case ErrorCode::kPrecondition: return "precondition";
        case ErrorCode::kInvalidAction: return "invalid-action";
        case ErrorCode::kInvalidSource: return "invalid-source";
        case ErrorCode::kMissingBaseline: return "missing-baseline";
        case ErrorCode::kInternal: return "internal";
    }
    return "unknown";
}

}  // namespace alchemist
