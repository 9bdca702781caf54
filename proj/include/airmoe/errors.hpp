// errors.hpp - exception hierarchy shared across the engine
//
// Exit-code mapping used by the CLI:
//   InvalidInputError / CorruptionError / FormatError / VersionError -> 3
//   InvalidConfigError -> 2, DivergenceError -> 4, usage errors -> 1

#pragma once

#include <stdexcept>
#include <string>

namespace airmoe {

// Bad data fed to an operation (non-finite values, shape mismatch, ...).
struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally invalid configuration (K > E, M > E, violated constraint, ...).
struct InvalidConfigError : std::runtime_error {
    explicit InvalidConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed serialized data (bad magic, truncation).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checksum mismatch on load.
struct CorruptionError : std::runtime_error {
    explicit CorruptionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Known format, unsupported version.
struct VersionError : std::runtime_error {
    explicit VersionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace airmoe
