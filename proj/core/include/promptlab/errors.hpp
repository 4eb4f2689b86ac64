#pragma once

#include <stdexcept>
#include <string>

namespace plab {

// A documented precondition of an operation does not hold. The CLI maps this
// to exit code 2.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Inputs whose shapes disagree with each other or with a declared header.
class ShapeError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

// An iterative method hit its iteration cap.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Malformed weight or configuration file. `location` is a JSON pointer
// ("/layers/0/heads/1/W_q") or a byte offset description.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& location, const std::string& message)
        : std::runtime_error(location.empty() ? message : location + ": " + message),
          location_(location) {}

    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

} // namespace plab
