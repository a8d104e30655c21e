#pragma once

#include <stdexcept>
#include <string>

namespace battx {

/// Base class of every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An argument or state lies outside an operation's mathematical domain.
struct DomainError : Error {
    using Error::Error;
};

/// File access or parse failure; messages carry the path and line where known.
struct IoError : Error {
    using Error::Error;
};

/// Numerical breakdown: degenerate spectra, ill-conditioned solves, non-finite values.
struct NumericalError : Error {
    using Error::Error;
};

/// A dataset does not match the experiment design an identification step requires.
struct DatasetError : Error {
    using Error::Error;
};

/// The optimizer could not produce a usable result from any start.
struct OptimizationError : Error {
    using Error::Error;
};

} // namespace battx
