#pragma once

#include <Eigen/Dense>

namespace colora::linalg {

/// Dense row-major matrix used throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Thin singular value decomposition M = U diag(S) Vt with k = min(m, n).
struct SvdResult {
  Matrix U;   // m x k, orthonormal columns
  Vector S;   // k, descending, nonnegative
  Matrix Vt;  // k x n, orthonormal rows
};

/// One-sided (Hestenes) Jacobi SVD.
///
/// Wide inputs are handled through the transpose. Inputs with more than four
/// times as many rows as columns are first reduced by a Householder QR and the
/// Jacobi sweeps run on the small triangular factor. Columns of U belonging to
/// zero singular values are completed to an orthonormal set.
SvdResult svd(const Matrix& m);

/// Default relative truncation for the least-squares solvers.
inline constexpr double kDefaultRelTol = 1e-10;

struct LstsqResult {
  Vector x;
  int rank = 0;             // number of singular values kept
  bool degenerate = false;  // nothing kept, or the constraint left no freedom
};

/// Minimum-norm minimizer of ||A x - b||_2; singular values below
/// rel_tol * S_max are treated as zero.
LstsqResult lstsq_min_norm(const Matrix& a, const Vector& b, double rel_tol = kDefaultRelTol);

/// Minimizer of ||A x - b||_2 subject to C x = 0 (nullspace method).
/// If C has no nullspace the zero vector is returned with `degenerate` set.
LstsqResult lstsq_constrained(const Matrix& a, const Vector& b, const Matrix& c,
                              double rel_tol = kDefaultRelTol);

/// Orthonormal basis (as columns) of null(C), rank decided with rel_tol.
Matrix null_space(const Matrix& c, double rel_tol = kDefaultRelTol);

}  // namespace colora::linalg
