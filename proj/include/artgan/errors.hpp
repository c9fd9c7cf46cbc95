#pragma once

#include <stdexcept>
#include <string>

namespace artgan {

/// Base class for every error the toolkit raises. The exit code is what the
/// command-line front end returns when the error escapes a subcommand:
/// 1 for validation-type failures, 2 for runtime and numeric failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
};

class ValidationError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Structurally valid header but the payload is short or fails its checksum.
class CorruptionError : public FormatError {
public:
    using FormatError::FormatError;
};

class EmptyDatasetError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InsufficientDataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace artgan
