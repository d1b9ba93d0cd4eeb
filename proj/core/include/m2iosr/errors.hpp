#pragma once

#include <stdexcept>
#include <string>

namespace m2iosr {

/// Base class for every error raised by the library. `kind()` is a stable
/// lowercase tag used by the command-line tool when it reports failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid configuration values, shapes, or unknown identifiers.
class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric"; }
};

/// Missing or malformed data files.
class DataError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "data"; }
};

/// Checkpoint manifest and parameter blob disagree with the model.
class CheckpointError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "checkpoint"; }
};

} // namespace m2iosr
