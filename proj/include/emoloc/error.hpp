#pragma once

#include <stdexcept>
#include <string>

namespace emoloc {

// Base class for every error the library raises on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not match an operation's contract.
struct DimensionError : Error {
    using Error::Error;
};

// An operation's stated precondition is violated by the caller.
struct PreconditionError : Error {
    using Error::Error;
};

// Invalid configuration value (bad flag combination, bad hyperparameter).
struct ConfigError : Error {
    using Error::Error;
};

// A structural contract was broken (e.g. backward on a non-scalar loss).
struct ContractError : Error {
    using Error::Error;
};

// Malformed input file; the message carries the line or offset.
struct ParseError : Error {
    using Error::Error;
};

// Training produced a non-finite quantity.
struct NumericError : Error {
    using Error::Error;
};

// Filesystem failure (missing path, short write).
struct IoError : Error {
    using Error::Error;
};

}  // namespace emoloc
