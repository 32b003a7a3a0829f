#pragma once

#include <stdexcept>
#include <string>

namespace domkl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters, dimensions, counts or config keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Caller passed data of the wrong shape (dimension mismatch, out-of-range index).
class InputError : public Error {
public:
    using Error::Error;
};

/// A neighbor exchange was incomplete or inconsistent.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or solver non-convergence.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Dataset could not be read or yielded no usable rows.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Output files could not be written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace domkl
