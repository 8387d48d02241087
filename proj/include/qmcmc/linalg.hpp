#pragma once

#include <Eigen/Dense>

namespace qmcmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // column j pairs with values(j)
};

/// Full eigendecomposition of a real symmetric matrix (LAPACK dsyevd).
///
/// If the matrix is invariant under the global spin flip x -> ~x (dimension a
/// power of two), the two parity blocks are diagonalised separately and the
/// eigenvectors are mapped back to the computational basis. The result is the
/// same decomposition at roughly a quarter of the cost.
SymmetricEigen eigh(const Matrix& a);

/// Eigenvalues only, ascending (LAPACK dsyevr).
Vector eigvalsh(const Matrix& a);

/// True when a(~x, ~y) == a(x, y) for all x, y within `rel_tol * max|a|`.
bool is_flip_symmetric(const Matrix& a, double rel_tol = 1e-13);

double max_abs(const Matrix& a);

/// Symmetric part (A + A^T) / 2.
Matrix symmetrized(const Matrix& a);

}  // namespace linalg
}  // namespace qmcmc
