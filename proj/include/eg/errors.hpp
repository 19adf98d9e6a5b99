#pragma once

#include <stdexcept>
#include <string>

namespace eg {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or axis mismatch between tensors.
struct DimError : Error {
    using Error::Error;
};

/// Invalid configuration value or file.
struct ConfigError : Error {
    using Error::Error;
};

/// A precondition of an operation was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

/// Required runtime state is missing (e.g. no forward trace).
struct StateError : Error {
    using Error::Error;
};

/// Non-finite value produced where the contract forbids it.
struct NumericError : Error {
    NumericError(const std::string& msg, int layer) : Error(msg), layer_index(layer) {}
    int layer_index;
};

/// Malformed input file. Carries the byte offset of the defect.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte offset " + std::to_string(offset) + ")"), byte_offset(offset) {}
    std::size_t byte_offset;
};

/// Network construction failed; names the offending layer.
struct BuildError : Error {
    BuildError(const std::string& msg, int layer) : Error(msg), layer_index(layer) {}
    int layer_index;
};

/// Training loss became non-finite.
struct DivergedError : Error {
    using Error::Error;
};

}  // namespace eg
