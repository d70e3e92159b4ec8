#pragma once

#include <stdexcept>
#include <string>

namespace rmmdf {

// Base of every exception the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shape or spatial-size contract violated.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid configuration value, missing key or inconsistent network spec.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or gradient.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Filesystem / decode failures.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rmmdf
