#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mefm {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite or otherwise invalid observations.
class DataError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// A caller violated a documented precondition (bad config, negative input, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Components that do not satisfy min(alpha_t) = min(beta_t) = 0.
class IdentificationError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Solver could not certify its answer. Carries the best iterate.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd best, double residual)
        : NumericalError(what), best_(std::move(best)), residual_(residual) {}

    const Eigen::VectorXd& best_iterate() const { return best_; }
    double residual() const { return residual_; }

private:
    Eigen::VectorXd best_;
    double residual_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mefm
