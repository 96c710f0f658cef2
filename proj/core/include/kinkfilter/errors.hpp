#pragma once

#include <stdexcept>
#include <string>

namespace kinkfilter {

/// Bad input data, bad configuration, or a violated precondition.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A solver ran out of its enumeration or node budget. Exit code 3.
class BudgetError : public std::runtime_error {
public:
    explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerically degenerate instance (rank deficiency, residual collapse, ...).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// An internal consistency check failed; indicates a bug. Exit code 4.
class InvariantError : public std::logic_error {
public:
    explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace kinkfilter
