#pragma once

// Shared helpers for the unit and acceptance tests: independent small
// oracles (spectral radius, random matrices from the counter RNG) that do
// not reuse the library paths they are checking.

#include <stochpc/rng.hpp>
#include <stochpc/types.hpp>

namespace testsup {

using stochpc::Mat;
using stochpc::Vec;

/// Largest eigenvalue modulus, via the general eigensolver.
inline double spectral_radius(const Mat& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

/// Matrix of i.i.d. standard normals fully determined by (seed, stream).
inline Mat random_matrix(int rows, int cols, std::uint64_t seed,
                         std::uint64_t stream = 0) {
  stochpc::CounterRng rng(seed);
  Mat M(rows, cols);
  std::uint64_t draw = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = rng.normal(stream, 0, draw++);
  return M;
}

/// Random symmetric PSD matrix F·Fᵀ.
inline Mat random_psd(int n, std::uint64_t seed, std::uint64_t stream = 0) {
  const Mat F = random_matrix(n, n, seed, stream);
  return (F * F.transpose()).eval();
}

/// Random stable matrix: normal entries rescaled to the given spectral
/// radius.
inline Mat random_stable(int n, double radius, std::uint64_t seed,
                         std::uint64_t stream = 0) {
  Mat A = random_matrix(n, n, seed, stream);
  const double rho = spectral_radius(A);
  if (rho > 0) A *= radius / rho;
  return A;
}

/// Worst absolute entry difference.
inline double max_abs_diff(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Relative gap used throughout: ‖a−b‖_∞ / (1 + ‖a‖_∞).
inline double rel_gap(const Mat& a, const Mat& b) {
  if (a.size() == 0 && b.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / (1.0 + a.cwiseAbs().maxCoeff());
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  return es.eigenvalues().minCoeff();
}

}  // namespace testsup
