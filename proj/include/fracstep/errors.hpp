#pragma once

#include <stdexcept>
#include <string>

namespace fracstep {

/// Raised when user-supplied parameters violate a documented precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical step cannot meet its contract (e.g. a linear solve
/// that fails even after the direct fallback).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, int step = -1)
        : std::runtime_error(what), step_(step) {}

    int step() const noexcept { return step_; }

private:
    int step_;
};

}  // namespace fracstep
