#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctxmeter {

// Error taxonomy shared by the library and the CLI. The CLI maps each type
// to a distinct exit code, so new failure modes should pick (or add) the
// matching type instead of throwing std::runtime_error directly.

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct MissingInputError : std::runtime_error {
    explicit MissingInputError(const std::string& path)
        : std::runtime_error("missing input: " + path), path(path) {}
    std::string path;
};

// Malformed on-disk artifact. byte_offset points at the first offending byte.
struct FormatError : std::runtime_error {
    FormatError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset(byte_offset) {}
    std::size_t byte_offset;
};

struct BudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, long long epoch)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch(epoch) {}
    long long epoch;
};

}  // namespace ctxmeter
