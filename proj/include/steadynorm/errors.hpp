#pragma once

#include <stdexcept>

namespace steadynorm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Arguments outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A zero matrix or vector was given where a direction is required.
class DegenerateError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Invalid or unknown configuration. Maps to exit code 2 in the CLI.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training or simulation produced non-finite values. Exit code 3.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Output could not be written. Exit code 4.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace steadynorm
