#pragma once

#include <stdexcept>
#include <string>

namespace goodd {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Malformed or missing dataset file.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes do not fit the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf where finite values are required.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Object used before it was populated (e.g. scoring an untrained model).
class StateError : public Error {
public:
    using Error::Error;
};

/// Bad configuration file or key.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace goodd
