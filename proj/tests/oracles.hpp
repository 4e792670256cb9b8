// Test-only reference implementations, independent of the library's
// linear-algebra paths. Used to cross-check results, never to produce them.
#pragma once

#include <cmath>
#include <random>

#include "dopt/linalg.hpp"

namespace oracles {

using dopt::Matrix;
using dopt::Vector;

// Spectral norm by power iteration on M'M.
inline double power_iteration_norm(const Matrix& m, int iters = 2000) {
  const Matrix g = m.transpose() * m;
  Vector x = Vector::Ones(g.rows());
  x.normalize();
  double lam = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector y = g * x;
    const double ny = y.norm();
    if (ny == 0.0) return 0.0;
    x = y / ny;
    lam = ny;
  }
  return std::sqrt(lam);
}

// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
inline double jacobi_max_eigenvalue(Matrix a, int sweeps = 60) {
  const int n = static_cast<int>(a.rows());
  for (int s = 0; s < sweeps; ++s) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = 0.5 * (a(q, q) - a(p, p)) / a(p, q);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        Matrix rot = Matrix::Identity(n, n);
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = sn;
        rot(q, p) = -sn;
        a = rot.transpose() * a * rot;
      }
  }
  double best = a(0, 0);
  for (int i = 1; i < n; ++i) best = std::max(best, a(i, i));
  return best;
}

inline Matrix random_matrix(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

}  // namespace oracles
