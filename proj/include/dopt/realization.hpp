#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dopt/linalg.hpp"

namespace dopt {

// State-space description of a first-order distributed algorithm:
//
//   [ x+ ]   [ A   B_u  B_v ] [ x ]
//   [ y  ] = [ C_y D_yu D_yv ] [ u ],   u = grad f(y),  v = L z,
//   [ z  ]   [ C_z D_zu D_zv ] [ v ]
//
// with the per-network invariant sum_j (F_x x_j + F_u u_j) = 0.
// The gradient channel has width one; z carries p communicated variables.
struct Realization {
  Matrix A;     // n_x x n_x
  Matrix B_u;   // n_x x 1
  Matrix B_v;   // n_x x p
  Matrix C_y;   // 1 x n_x
  Matrix D_yu;  // 1 x 1
  Matrix D_yv;  // 1 x p
  Matrix C_z;   // p x n_x
  Matrix D_zu;  // p x 1
  Matrix D_zv;  // p x p
  Matrix F_x;   // q x n_x (q may be 0)
  Matrix F_u;   // q x 1
  std::string name;

  int n_states() const { return static_cast<int>(A.rows()); }
  int n_comm() const { return static_cast<int>(C_z.rows()); }
  int n_invariants() const { return static_cast<int>(F_x.rows()); }

  void validate() const {
    const auto nx = A.rows(), p = C_z.rows(), q = F_x.rows();
    if (nx < 1 || A.cols() != nx) throw DimensionError(name + ": A not square");
    if (p < 1) throw DimensionError(name + ": needs at least one communicated variable");
    auto want = [&](const Matrix& m, Eigen::Index r, Eigen::Index c, const char* f) {
      if (m.rows() != r || m.cols() != c)
        throw DimensionError(name + ": bad shape for " + f);
      if (!m.allFinite()) throw DimensionError(name + ": non-finite entry in " + f);
    };
    want(B_u, nx, 1, "B_u");
    want(B_v, nx, p, "B_v");
    want(C_y, 1, nx, "C_y");
    want(D_yu, 1, 1, "D_yu");
    want(D_yv, 1, p, "D_yv");
    want(C_z, p, nx, "C_z");
    want(D_zu, p, 1, "D_zu");
    want(D_zv, p, p, "D_zv");
    if (q > 0) {
      want(F_x, q, nx, "F_x");
      want(F_u, q, 1, "F_u");
    }
    if (!A.allFinite()) throw DimensionError(name + ": non-finite entry in A");
  }

  // [F_x F_u], the invariant row block; empty (0 x (n_x+1)) when q = 0.
  Matrix invariant_rows() const {
    Matrix f(F_x.rows(), A.rows() + 1);
    if (F_x.rows() > 0) f << F_x, F_u;
    return f;
  }
};

namespace catalog_detail {

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows.begin()->size());
  Matrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace catalog_detail

// Table-entry constructors. alpha is the stepsize; mu the overrelaxation
// parameter of the gossip map W = I - mu*L.

inline Realization make_svl(double alpha, double beta, double gamma, double delta) {
  using catalog_detail::mat;
  Realization r;
  r.A = mat({{1, beta}, {0, 1}});
  r.B_u = mat({{-alpha}, {0}});
  r.B_v = mat({{-gamma}, {-1}});
  r.C_y = mat({{1, 0}});
  r.D_yu = mat({{0}});
  r.D_yv = mat({{-delta}});
  r.C_z = mat({{1, 0}});
  r.D_zu = mat({{0}});
  r.D_zv = mat({{0}});
  r.F_x = mat({{0, 1}});
  r.F_u = mat({{0}});
  r.name = "SVL";
  return r;
}

inline Realization make_extra(double alpha, double mu) {
  using catalog_detail::mat;
  Realization r;
  r.A = mat({{2, -1, alpha}, {1, 0, 0}, {0, 0, 0}});
  r.B_u = mat({{-alpha}, {0}, {1}});
  r.B_v = mat({{-mu}, {0}, {0}});
  r.C_y = mat({{1, 0, 0}});
  r.D_yu = mat({{0}});
  r.D_yv = mat({{0}});
  r.C_z = mat({{1, -0.5, 0}});
  r.D_zu = mat({{0}});
  r.D_zv = mat({{0}});
  r.F_x = mat({{1, -1, alpha}});
  r.F_u = mat({{0}});
  r.name = "EXTRA";
  return r;
}

inline Realization make_nids(double alpha, double mu) {
  Realization r = make_extra(alpha, mu);
  using catalog_detail::mat;
  r.C_z = mat({{1, -0.5, alpha / 2}});
  r.D_zu = mat({{-alpha / 2}});
  r.name = "NIDS";
  return r;
}

inline Realization make_exact_diffusion(double alpha, double mu) {
  using catalog_detail::mat;
  Realization r;
  r.A = mat({{2, -1}, {1, 0}});
  r.B_u = mat({{-alpha}, {-alpha}});
  r.B_v = mat({{-mu}, {-mu / 2}});
  r.C_y = mat({{1, 0}});
  r.D_yu = mat({{0}});
  r.D_yv = mat({{-mu / 2}});
  r.C_z = mat({{1, 0}});
  r.D_zu = mat({{0}});
  r.D_zv = mat({{0}});
  r.F_x = mat({{1, -1}});
  r.F_u = mat({{0}});
  r.name = "ExDiff";
  return r;
}

inline Realization make_diging(double alpha, double mu) {
  using catalog_detail::mat;
  Realization r;
  r.A = mat({{1, -alpha, 0}, {0, 1, -1}, {0, 0, 0}});
  r.B_u = mat({{0}, {1}, {1}});
  r.B_v = mat({{-mu, 0}, {0, -mu}, {0, 0}});
  r.C_y = mat({{1, -alpha, 0}});
  r.D_yu = mat({{0}});
  r.D_yv = mat({{-mu, 0}});
  r.C_z = mat({{1, 0, 0}, {0, 1, 0}});
  r.D_zu = mat({{0}, {0}});
  r.D_zv = Matrix::Zero(2, 2);
  r.F_x = mat({{0, 1, -1}});
  r.F_u = mat({{0}});
  r.name = "DIGing";
  return r;
}

inline Realization make_aug_dgm(double alpha, double mu) {
  Realization r = make_diging(alpha, mu);
  using catalog_detail::mat;
  r.B_v = mat({{-mu, alpha * mu}, {0, -mu}, {0, 0}});
  r.D_yv = mat({{-mu, alpha * mu}});
  r.name = "AugDGM";
  return r;
}

inline Realization make_udig(double alpha, double mu, double m, double L) {
  using catalog_detail::mat;
  Realization r;
  r.A = mat({{1, -alpha}, {0, 1}});
  r.B_u = mat({{-alpha}, {0}});
  r.B_v = mat({{-mu, 0}, {0, -mu}});
  r.C_y = mat({{1, 0}});
  r.D_yu = mat({{0}});
  r.D_yv = mat({{0, 0}});
  r.C_z = mat({{1, 0}, {-(L + m) / 2, 1}});
  r.D_zu = mat({{0}, {1}});
  r.D_zv = Matrix::Zero(2, 2);
  r.F_x = mat({{0, 1}});
  r.F_u = mat({{0}});
  r.name = "uDIG";
  return r;
}

inline Realization make_uextra(double alpha, double mu, double m, double L) {
  Realization r = make_udig(alpha, mu, m, L);
  using catalog_detail::mat;
  r.C_z = mat({{1, 0}, {-L, 1}});
  r.D_zv = mat({{0, 0}, {L * mu, 0}});
  r.name = "uEXTRA";
  return r;
}

struct CatalogParams {
  double alpha = 0.0;
  double mu = 1.0;
  // SVL only
  double beta = 0.0, gamma = 0.0, delta = 1.0;
  // uDIG / uEXTRA embed the sector bounds in the realization
  double m = 1.0, L = 0.0;
};

inline const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {
      "EXTRA", "NIDS", "DIGing", "AugDGM", "ExDiff", "uDIG", "uEXTRA", "SVL"};
  return names;
}

inline Realization catalog(const std::string& name, const CatalogParams& p) {
  if (p.alpha <= 0) throw ConfigError("catalog: alpha must be positive");
  if (name == "SVL") return make_svl(p.alpha, p.beta, p.gamma, p.delta);
  if (p.mu == 0) throw ConfigError("catalog: mu must be nonzero");
  if (name == "EXTRA") return make_extra(p.alpha, p.mu);
  if (name == "NIDS") return make_nids(p.alpha, p.mu);
  if (name == "DIGing") return make_diging(p.alpha, p.mu);
  if (name == "AugDGM") return make_aug_dgm(p.alpha, p.mu);
  if (name == "ExDiff") return make_exact_diffusion(p.alpha, p.mu);
  if (name == "uDIG" || name == "uEXTRA") {
    if (!(p.m > 0) || p.L < p.m)
      throw ConfigError("catalog: " + name + " needs sector bounds 0 < m <= L");
    return name == "uDIG" ? make_udig(p.alpha, p.mu, p.m, p.L)
                          : make_uextra(p.alpha, p.mu, p.m, p.L);
  }
  throw ConfigError("catalog: unknown algorithm '" + name + "'");
}

// Vectors p, q realizing the fixed point of Appendix-style constructions:
// (A-I)p = 0, F_x p = 0, C_y p = 1 and (A-I)q = B_u, C_y q = D_yu, C_z q = D_zu.
struct FixedPointWitness {
  Vector p_vec;
  Vector q_vec;
};

// Existence test for a fixed point robust to all admissible functions and
// graphs: a nonzero direction in null(A-I)n null(F_x) seen by C_y, and
// [B_u; D_yu; D_zu] in the column space of [A-I; C_y; C_z].
inline std::optional<FixedPointWitness> check_fixed_point(const Realization& r,
                                                          double tol = 1e-9) {
  r.validate();
  const int nx = r.n_states();
  Matrix stacked(nx + r.n_invariants(), nx);
  stacked.topRows(nx) = r.A - Matrix::Identity(nx, nx);
  if (r.n_invariants() > 0) stacked.bottomRows(r.n_invariants()) = r.F_x;
  Matrix nullsp = nullspace_basis(stacked, tol);
  if (nullsp.cols() == 0) return std::nullopt;
  RowVector seen = r.C_y * nullsp;
  const double scale = std::max(1.0, spectral_norm(r.C_y));
  if (seen.norm() <= tol * scale) return std::nullopt;

  // least-norm p in the nullspace with C_y p = 1
  Vector p = nullsp * seen.transpose() / seen.squaredNorm();

  Matrix g(nx + 1 + r.n_comm(), nx);
  g << r.A - Matrix::Identity(nx, nx), r.C_y, r.C_z;
  Matrix h(nx + 1 + r.n_comm(), 1);
  h << r.B_u, r.D_yu, r.D_zu;
  Matrix q = solve_least_squares(g, h);
  const double resid = (g * q - h).norm();
  const double hscale = std::max(1.0, h.norm());
  if (resid > 1e-8 * hscale) return std::nullopt;
  return FixedPointWitness{p, q.col(0)};
}

// True when the y/u/z/v evaluations can be ordered without circular
// dependency. Covers the paper's two feedthrough patterns ([0 D_yv; 0 0]
// and [0 0; D_zu 0]) and staged-communication variants such as uEXTRA,
// where D_zv is strictly lower triangular.
inline bool check_implementable(const Realization& r) {
  r.validate();
  if (r.D_yu(0, 0) != 0.0) return false;  // y <- u <- y cycle
  const int p = r.n_comm();
  // nodes: 0 = u, 1..p = v_c; edge a -> b when a needs b first
  std::vector<std::vector<int>> needs(p + 1);
  for (int c = 0; c < p; ++c) {
    if (r.D_yv(0, c) != 0.0) needs[0].push_back(1 + c);
  }
  for (int c = 0; c < p; ++c) {
    if (r.D_zu(c, 0) != 0.0) needs[1 + c].push_back(0);
    for (int j = 0; j < p; ++j)
      if (r.D_zv(c, j) != 0.0) needs[1 + c].push_back(1 + j);
  }
  std::vector<int> state(p + 1, 0);  // 0 new, 1 visiting, 2 done
  auto dfs = [&](auto&& self, int node) -> bool {
    state[node] = 1;
    for (int dep : needs[node]) {
      if (state[dep] == 1) return false;
      if (state[dep] == 0 && !self(self, dep)) return false;
    }
    state[node] = 2;
    return true;
  };
  for (int node = 0; node <= p; ++node)
    if (state[node] == 0 && !dfs(dfs, node)) return false;
  return true;
}

// Topological evaluation order over the nodes {u, v_1..v_p}; u is node 0.
inline std::vector<int> evaluation_order(const Realization& r) {
  if (!check_implementable(r))
    throw ConfigError(r.name + ": circular feedthrough, not implementable");
  const int p = r.n_comm();
  std::vector<int> order;
  std::vector<bool> done(p + 1, false);
  auto ready = [&](int node) {
    if (node == 0) {
      for (int c = 0; c < p; ++c)
        if (r.D_yv(0, c) != 0.0 && !done[1 + c]) return false;
      return true;
    }
    const int c = node - 1;
    if (r.D_zu(c, 0) != 0.0 && !done[0]) return false;
    for (int j = 0; j < p; ++j)
      if (r.D_zv(c, j) != 0.0 && !done[1 + j]) return false;
    return true;
  };
  while (static_cast<int>(order.size()) < p + 1) {
    for (int node = 0; node <= p; ++node) {
      if (!done[node] && ready(node)) {
        done[node] = true;
        order.push_back(node);
      }
    }
  }
  return order;
}

// Stacked fixed point for given per-agent gradients at the optimum.
// Layouts: x is (n*n_x) x d agent-major, z and v are (n*p) x d, y and u n x d.
struct FixedPoint {
  Matrix x;
  Matrix y;
  Matrix z;
  Matrix u;
  Matrix v;
  int n = 0;
  int d = 1;
};

inline FixedPoint construct_fixed_point(const Realization& r,
                                        const FixedPointWitness& w,
                                        const Matrix& gradients_at_opt,
                                        const RowVector& y_opt) {
  const int n = static_cast<int>(gradients_at_opt.rows());
  const int d = static_cast<int>(y_opt.cols());
  if (gradients_at_opt.cols() != d)
    throw DimensionError("construct_fixed_point: gradient/y_opt width mismatch");
  RowVector gsum = gradients_at_opt.colwise().sum();
  if (gsum.norm() > 1e-8 * std::max(1.0, gradients_at_opt.norm()))
    throw ConfigError("construct_fixed_point: gradients at optimum do not sum to zero");

  const int nx = r.n_states(), p = r.n_comm();
  FixedPoint fp;
  fp.n = n;
  fp.d = d;
  fp.x.resize(n * nx, d);
  fp.y.resize(n, d);
  fp.z.resize(n * p, d);
  fp.u = gradients_at_opt;
  fp.v = Matrix::Zero(n * p, d);
  const Matrix z_common = (r.C_z * w.p_vec) * y_opt;  // p x d, same for all agents
  for (int i = 0; i < n; ++i) {
    RowVector gi = gradients_at_opt.row(i);
    fp.x.middleRows(i * nx, nx) = w.p_vec * y_opt - w.q_vec * gi;
    fp.y.row(i) = y_opt;
    fp.z.middleRows(i * p, p) = z_common;
  }
  return fp;
}

}  // namespace dopt
