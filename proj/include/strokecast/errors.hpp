#pragma once

#include <stdexcept>
#include <string>

namespace strokecast {

// Bad data handed to an operation (malformed rows, non-finite coordinates, ...).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration or usage (zero std, degenerate covariance, bad flags).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced by a numeric primitive, or a non-finite training loss.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace strokecast
