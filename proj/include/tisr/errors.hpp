#pragma once

#include <stdexcept>
#include <string>

namespace tisr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unreadable or unwritable file.
class IoError : public Error {
public:
    using Error::Error;
};

// File decoded but its content is not a usable raster / document.
class FormatError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Not enough geometric support to register an image pair.
class RegistrationInfeasible : public Error {
public:
    using Error::Error;
};

// Degenerate point configuration for homography estimation.
class EstimationError : public Error {
public:
    using Error::Error;
};

// Checkpoint content does not match its manifest or the expected model.
class CorruptionError : public Error {
public:
    using Error::Error;
};

}  // namespace tisr
