#pragma once

#include <stdexcept>
#include <string>

namespace gspam {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A query point left the (enlarged) domain.
struct DomainError : Error {
    using Error::Error;
};

/// Bad benchmark / run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Hash-family construction could not certify pairwise separation.
struct ConstructionError : Error {
    using Error::Error;
};

/// The requested sampling-parameter window is empty.
struct InfeasibleError : Error {
    using Error::Error;
};

/// A sparse solve did not converge; carries the final residual.
struct SolverError : Error {
    double residual;
    SolverError(const std::string& what, double res) : Error(what), residual(res) {}
};

}  // namespace gspam
