#pragma once

#include <stdexcept>
#include <string>

namespace sslvqa {

/// Invalid configuration, arguments, or shape contracts.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed, truncated or corrupted files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or failed factorizations.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sslvqa
