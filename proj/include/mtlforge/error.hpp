#pragma once

#include <stdexcept>
#include <string>

namespace mtlforge {

// Error taxonomy. The CLI maps these onto exit codes: input/config/parse
// problems exit 2, numeric failures (divergence, NaN gradients) exit 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data: unknown label, empty corpus, out-of-range target.
class ValueError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values or combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor shape disagreement.
class DimensionError : public Error {
public:
    using Error::Error;
};

// API contract violation (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

// Object in the wrong state for the call (e.g. consumed tape).
class StateError : public Error {
public:
    using Error::Error;
};

// Malformed file content.
class ParseError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace mtlforge
