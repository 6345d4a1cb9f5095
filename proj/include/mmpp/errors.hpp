#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmpp {

/// Malformed input text. `line` is 1-based; 0 when unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A value outside the domain an operation accepts (bad mark, time outside
/// the window, asymmetric covariance, mismatched dimensions, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A mixture component whose total responsibility vanished.
class DegenerateClusterError : public std::runtime_error {
public:
    DegenerateClusterError(const std::string& what, int cluster)
        : std::runtime_error(what), cluster_(cluster) {}
    int cluster() const noexcept { return cluster_; }

private:
    int cluster_;
};

/// Data too sparse for a kernel estimator to be defined.
class InsufficientDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Overflow or other non-recoverable arithmetic failure.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Corrupt or incompatible serialized model.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mmpp
