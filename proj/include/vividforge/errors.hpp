#pragma once

#include <stdexcept>
#include <string>

namespace vividforge {

// Base of every library error. The CLI maps Validation-class errors to exit
// code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Tensor or clip dimensions violate a contract.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Malformed file content (bad magic, odd PPM header, inconsistent frames).
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class EmptyFaceError : public Error {
public:
    using Error::Error;
};

class EndpointError : public Error {
public:
    using Error::Error;
};

class EmptyResponseError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace vividforge
