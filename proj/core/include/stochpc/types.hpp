#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

/// Common aliases and error types shared by every stochpc module.
namespace stochpc {

/// Dense real matrix. Entries are addressed (row, col); every serialized
/// form (JSON nested arrays, CSV) is written row by row.
using Mat = Eigen::MatrixXd;
/// Dense real column vector.
using Vec = Eigen::VectorXd;

/// Base class of all library exceptions.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand dimensions are inconsistent with the requested operation.
struct DimensionError : Error {
  using Error::Error;
};

/// A constrained problem admits no feasible point.
struct InfeasibleError : Error {
  using Error::Error;
};

/// An iterative routine reached its iteration cap before converging.
struct MaxIterError : Error {
  using Error::Error;
};

/// An experiment configuration failed validation.
struct ConfigError : Error {
  using Error::Error;
};

/// Symmetric part of a square matrix; applied after every covariance
/// update so round-off can never accumulate asymmetry.
inline Mat symmetrized(const Mat& S) { return 0.5 * (S + S.transpose()); }

/// Throw DimensionError with a uniform message when `cond` is false.
inline void require_dims(bool cond, const std::string& what) {
  if (!cond) throw DimensionError("dimension mismatch: " + what);
}

}  // namespace stochpc
