#pragma once

#include <stdexcept>
#include <string>

namespace deepstorm {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad parameters, violated schedule
/// bounds, malformed config files, infeasible graph densities).
struct ConfigError : Error {
  using Error::Error;
};

/// Numerical failure at runtime (eigensolver non-convergence, divergence of
/// the iterate sequence, non-finite values).
struct NumericError : Error {
  using Error::Error;
};

/// Filesystem / serialization failure (missing files, corrupt checkpoints,
/// version mismatches).
struct IoError : Error {
  using Error::Error;
};

}  // namespace deepstorm
