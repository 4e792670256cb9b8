#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "dopt/errors.hpp"

namespace dopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_nonempty(const Matrix& m, const char* what) {
  if (m.rows() == 0 || m.cols() == 0)
    throw DimensionError(std::string(what) + ": empty matrix");
}

// Kronecker product. kron(A, B) has block (i,j) equal to A(i,j) * B.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Largest singular value. Jacobi SVD keeps full accuracy on the tiny
// matrices this toolkit works with.
inline double spectral_norm(const Matrix& m) {
  require_nonempty(m, "spectral_norm");
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

// Orthonormal basis of { v : ||Mv|| <= tol * ||M|| * ||v|| }, the numerical
// right nullspace at relative tolerance tol.
inline Matrix nullspace_basis(const Matrix& m, double tol = 1e-9) {
  require_nonempty(m, "nullspace_basis");
  if (tol < 0) throw std::invalid_argument("nullspace_basis: tol < 0");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol * smax) ++rank;
  return svd.matrixV().rightCols(m.cols() - rank);
}

inline Eigen::SelfAdjointEigenSolver<Matrix> sym_eig(const Matrix& s) {
  if (s.rows() != s.cols())
    throw DimensionError("symmetric eigensolver: matrix not square");
  require_nonempty(s, "symmetric eigensolver");
  Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw SolverError("symmetric eigendecomposition failed");
  return es;
}

inline double max_eigenvalue_symmetric(const Matrix& s) {
  return sym_eig(s).eigenvalues().maxCoeff();
}

inline double min_eigenvalue_symmetric(const Matrix& s) {
  return sym_eig(s).eigenvalues().minCoeff();
}

// Pi = (1/n) 1 1^T, the projector onto the consensus direction.
inline Matrix consensus_projector(int n) {
  if (n < 1) throw DimensionError("consensus_projector: n < 1");
  return Matrix::Constant(n, n, 1.0 / n);
}

// Orthonormal basis U of the complement of span{1_n}; U is n x (n-1).
inline Matrix ones_complement_basis(int n) {
  if (n < 2) throw DimensionError("ones_complement_basis: n < 2");
  Matrix m = Matrix::Zero(n, n);
  m.col(0).setOnes();
  m.block(1, 1, n - 1, n - 1).setIdentity();
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ();
  // first column of q spans 1_n up to sign
  return q.rightCols(n - 1);
}

// Minimum-norm least-squares solution of A X = B.
inline Matrix solve_least_squares(const Matrix& a, const Matrix& b,
                                  double tol = 1e-10) {
  require_nonempty(a, "solve_least_squares");
  if (a.rows() != b.rows())
    throw DimensionError("solve_least_squares: row mismatch");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(tol);
  return svd.solve(b);
}

// Haar-distributed orthogonal matrix (QR of a Gaussian sample).
inline Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

}  // namespace dopt
