#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace alchemist {

// Error codes travel on the wire inside ERROR frames; values are stable.
enum class ErrorCode : std::uint16_t {
    kInvalidGrid = 1,
    kInvalidLayout = 2,
    kNotLocal = 3,
    kInvalidPartitioning = 4,
    kFrameTooLarge = 10,
    kIncompleteFrame = 11,
    kVersionMismatch = 12,
    kInvalidBuffer = 13,
    kDecode = 14,
    kUnknownCommand = 15,
    kBind = 20,
    kConnection = 21,
    kOutOfWorkers = 22,
    kLibraryNotFound = 23,
    kStaleSession = 24,
    kStaleHandle = 25,
    kOwnershipViolation = 26,
    kNotReady = 27,
    kUnknownFunction = 28,
    kBadArguments = 29,
    kPrecondition = 30,
    kInvalidAction = 31,
    kInvalidSource = 32,
    kMissingBaseline = 33,
    kInternal = 99,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace alchemist
