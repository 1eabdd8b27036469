#pragma once

#include <stdexcept>
#include <string>

namespace sediff {

// Base class for all library errors. Subclasses partition failures by how the
// command line tool should exit: configuration problems (exit 2), bad or
// missing data (exit 3), numeric/domain violations (exit 4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad config file, bad parameter combination.
struct ConfigError : Error {
    using Error::Error;
};

// Invalid call arguments: empty dataset, zero steps, signal too short.
struct ArgumentError : ConfigError {
    using ConfigError::ConfigError;
};

// Unreadable, malformed, or missing input data.
struct DataError : Error {
    using Error::Error;
};

// Operands with incompatible shapes.
struct DimensionError : DataError {
    using DataError::DataError;
};

// Structurally valid input that is unusable (e.g. an all-zero impulse response).
struct DegenerateInputError : DataError {
    using DataError::DataError;
};

// Metric undefined for the given input (e.g. all-zero reference signal).
struct MetricError : DataError {
    using DataError::DataError;
};

// Numeric argument outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

// Operation evaluated at a time point where it is singular.
struct SingularTimeError : DomainError {
    using DomainError::DomainError;
};

// Numeric failure during computation (overflow, non-finite result).
struct NumericError : Error {
    using Error::Error;
};

// Exit code the CLI uses for a given error class.
inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    return 4;  // DomainError, NumericError, and anything else numeric
}

}  // namespace sediff
