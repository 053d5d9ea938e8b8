#pragma once

#include <stdexcept>
#include <string>

namespace trawl {

// Error taxonomy, mirrored by the CLI exit codes:
//   ConfigError  -> 2   bad parameters, invalid flag combinations
//   BackendError -> 3   completion / embedding service failures
//   DataError    -> 4   malformed or inconsistent input data

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& what) : Error(what) {}
};

// Retried by RetryingClient; everything else fails fast.
class TransientBackendError : public BackendError {
public:
    explicit TransientBackendError(const std::string& what) : BackendError(what) {}
};

class AuthError : public BackendError {
public:
    explicit AuthError(const std::string& what) : BackendError(what) {}
};

// Surfaced distinctly so callers can truncate the prompt and retry.
class ContextLengthError : public BackendError {
public:
    explicit ContextLengthError(const std::string& what) : BackendError(what) {}
};

} // namespace trawl
