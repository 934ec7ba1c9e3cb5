#pragma once

#include <stdexcept>
#include <string>

namespace threedpm {

// Input outside an operation's mathematical domain (coincident poses, zero HPBW, alpha = 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Invalid or inconsistent configuration (schema violations, impossible episode requests).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite loss, divergence, or ambiguous numerical outcome.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File could not be read/written or failed its integrity check.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace threedpm
