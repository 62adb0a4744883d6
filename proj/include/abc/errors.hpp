#pragma once

#include <stdexcept>
#include <string>

namespace abc {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes or code lengths do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A scalar argument is outside its valid range (r < 0, alpha <= 0, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Experiment configuration is malformed or fails validation.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data violates a documented contract (bad label, dirty padding bits,
/// impossible sampling request, non-permutation ranking).
class DataError : public Error {
public:
    using Error::Error;
};

/// Operation called in an invalid order (backward on an empty graph, ...).
class StateError : public Error {
public:
    using Error::Error;
};

/// A binary file does not match its documented layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training loss became non-finite. Carries the schedule state at the
/// failing iteration so the CLI can report it.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, long iteration, double r, double alpha)
        : Error(msg), iteration(iteration), r(r), alpha(alpha) {}
    long iteration;
    double r;
    double alpha;
};

}  // namespace abc
