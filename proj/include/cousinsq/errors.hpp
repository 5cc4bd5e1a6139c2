#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cousinsq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A state, action, or environment index is out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// An argument violates an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A data structure invariant (stochasticity, symmetry, sign) does not hold.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// A linear solve or factorization produced an unusable result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// An environment cannot perform the requested kind of sampling.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// A model or tensor would exceed a configured size cap.
class SizeError : public Error {
public:
    using Error::Error;
};

/// A trace lacks the per-step records an analysis needs.
class CadenceError : public Error {
public:
    using Error::Error;
};

/// A windowed estimator was asked for a window the series does not cover.
class RangeError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Raised when a learner hits its sample cap before every state-action pair
/// reached the requested number of visits.
class CoverageError : public Error {
public:
    CoverageError(const std::string& what,
                  std::vector<std::pair<std::size_t, std::size_t>> starved)
        : Error(what), starved_(std::move(starved)) {}
    const std::vector<std::pair<std::size_t, std::size_t>>& starved() const noexcept {
        return starved_;
    }

private:
    std::vector<std::pair<std::size_t, std::size_t>> starved_;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = -1) : Error(what), line_(line) {}
    /// 1-based line in the config file, or -1 when unknown.
    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace cousinsq
