#pragma once

#include <stdexcept>
#include <string>

namespace dardkit {

/// Process exit codes used by the command line tool.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    data = 3,
    numerical = 4,
    io = 5,
};

/// Base of every error thrown by the library. Each subclass carries the exit
/// code the CLI reports when the error escapes a command.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
    ExitCode exit_code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Invalid or inconsistent configuration (bad hyperparameter, unknown key, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, ExitCode::config) {}
};

/// Caller broke a documented precondition (shape/length mismatch, index out of range).
class ContractViolation : public Error {
public:
    explicit ContractViolation(const std::string& what) : Error(what, ExitCode::config) {}
};

/// Malformed or out-of-domain input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what, ExitCode::data) {}
};

/// File does not follow the expected binary layout.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// Non-finite gradient or loss.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, ExitCode::numerical) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, ExitCode::io) {}
};

/// Checkpoint payload failed its checksum or ended early.
class IntegrityError : public IoError {
public:
    using IoError::IoError;
};

/// Checkpoint written by another format version or for another architecture.
class IncompatibleError : public IoError {
public:
    using IoError::IoError;
};

}  // namespace dardkit
