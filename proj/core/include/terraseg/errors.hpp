#pragma once

#include <stdexcept>
#include <string>

namespace terraseg {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes are incompatible for the requested operation.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// A configuration value is out of range or inconsistent (e.g. a convolution
/// whose output extent would be non-positive).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// An operation was called in a way its contract forbids (backward on a
/// non-scalar, stepping without gradients, empty input series, ...).
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

/// Mathematical domain violation (log of a non-positive value).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// A serialized artifact (checkpoint, config file) is malformed.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// Filesystem / image ingestion failure.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace terraseg
