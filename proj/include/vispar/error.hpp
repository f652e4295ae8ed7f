#pragma once

#include <stdexcept>
#include <string>

namespace vispar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point, region, or argument lies outside the set an operation is defined on.
class DomainError : public Error {
public:
    using Error::Error;
};

/// |p|^gamma with gamma < 0 evaluated at p = 0. Callers must go through the
/// regularized cascade instead.
class SingularEvaluation : public Error {
public:
    using Error::Error;
};

/// A proposed time step exceeded the stability bound.
class StepRejected : public Error {
public:
    StepRejected(const std::string& what, double suggested)
        : Error(what), suggested_dt(suggested) {}
    double suggested_dt;
};

/// A march could not continue (non-finite values, repeated CFL failure).
class SolveAborted : public Error {
public:
    using Error::Error;
};

/// Oscillation below the resolvable floor; exponent fitting is meaningless.
class FlatField : public Error {
public:
    using Error::Error;
};

}  // namespace vispar
