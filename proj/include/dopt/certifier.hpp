#pragma once

#include <memory>
#include <optional>

#include "dopt/realization.hpp"
#include "dopt/sdp.hpp"

namespace dopt {

// Function sector bounds and graph spectral-gap bound describing the
// adversary class.
struct ProblemClass {
  double m = 1.0;
  double L = 1.0;
  double sigma = 0.0;

  ProblemClass() = default;
  ProblemClass(double m_, double L_, double sigma_) : m(m_), L(L_), sigma(sigma_) {
    if (!(m > 0) || L < m) throw ConfigError("problem class: need 0 < m <= L");
    if (sigma < 0 || sigma >= 1) throw ConfigError("problem class: need 0 <= sigma < 1");
  }
  static ProblemClass from_kappa(double kappa, double sigma) {
    if (kappa < 1) throw ConfigError("problem class: kappa >= 1 required");
    return ProblemClass(1.0, kappa, sigma);
  }
  double kappa() const { return L / m; }

  // The design theory needs m < L strictly; degenerate classes are nudged.
  ProblemClass regularized() const {
    if (L > m) return *this;
    return ProblemClass(m, L * (1.0 + 1e-9), sigma);
  }
};

inline Matrix build_m0(const ProblemClass& pc) {
  Matrix m0(2, 2);
  m0 << -2.0 * pc.m * pc.L, pc.L + pc.m, pc.L + pc.m, -2.0;
  return m0;
}

inline Matrix build_m1(const ProblemClass& pc) {
  Matrix m1(2, 2);
  m1 << pc.sigma * pc.sigma - 1.0, 1.0, 1.0, -1.0;
  return m1;
}

// The two matrix inequalities of the rate certificate, as affine maps of
// (P, Q, R) at fixed rate rho:
//
//   consensus block    psi' [A B_u; I 0; C_y D_yu; 0 I]' diag(P, -rho^2 P, M0) [.] psi
//   disagreement block [..full..]' diag(Q, -rho^2 Q, M0, M1 (x) R) [..full..]
struct LmiForms {
  Matrix h0;  // (2n_x + 2) x n_psi : [A B_u; I 0; C_y D_yu; 0 1] * psi
  Matrix g1;  // (2n_x + 2 + 2p) x (n_x + 1 + p)
  Matrix m0;
  Matrix m1;
  double rho = 0.0;
  int n_x = 0;
  int p = 0;
  int n_psi = 0;

  int consensus_dim() const { return n_psi; }
  int disagreement_dim() const { return n_x + 1 + p; }

  Matrix consensus(const Matrix& P) const {
    return h0.transpose() * middle0(P) * h0;
  }
  Matrix disagreement(const Matrix& Q, const Matrix& R) const {
    return g1.transpose() * middle1(Q, R) * g1;
  }

  Matrix middle0(const Matrix& P) const {
    Matrix w = Matrix::Zero(2 * n_x + 2, 2 * n_x + 2);
    w.topLeftCorner(n_x, n_x) = P;
    w.block(n_x, n_x, n_x, n_x) = -rho * rho * P;
    w.bottomRightCorner(2, 2) = m0;
    return w;
  }
  Matrix middle1(const Matrix& Q, const Matrix& R) const {
    const int dim = 2 * n_x + 2 + 2 * p;
    Matrix w = Matrix::Zero(dim, dim);
    w.topLeftCorner(n_x, n_x) = Q;
    w.block(n_x, n_x, n_x, n_x) = -rho * rho * Q;
    w.block(2 * n_x, 2 * n_x, 2, 2) = m0;
    w.bottomRightCorner(2 * p, 2 * p) = kron(m1, R);
    return w;
  }
};

inline LmiForms assemble_lmis(const Realization& r, const ProblemClass& pc0,
                              double rho) {
  if (!(rho > 0)) throw ConfigError("assemble_lmis: rho must be positive");
  if (!check_fixed_point(r))
    throw ConfigError(r.name + ": fixed-point conditions fail (Prop. conditions), cannot certify");
  const ProblemClass pc = pc0.regularized();
  const int nx = r.n_states(), p = r.n_comm();

  LmiForms f;
  f.rho = rho;
  f.n_x = nx;
  f.p = p;
  f.m0 = build_m0(pc);
  f.m1 = build_m1(pc);

  Matrix fr = r.invariant_rows();
  Matrix psi = fr.rows() == 0 ? Matrix::Identity(nx + 1, nx + 1)
                              : nullspace_basis(fr);
  f.n_psi = static_cast<int>(psi.cols());

  Matrix g0(2 * nx + 2, nx + 1);
  g0.setZero();
  g0.topLeftCorner(nx, nx) = r.A;
  g0.topRightCorner(nx, 1) = r.B_u;
  g0.block(nx, 0, nx, nx).setIdentity();
  g0.block(2 * nx, 0, 1, nx) = r.C_y;
  g0.block(2 * nx, nx, 1, 1) = r.D_yu;
  g0(2 * nx + 1, nx) = 1.0;
  f.h0 = g0 * psi;

  Matrix g1(2 * nx + 2 + 2 * p, nx + 1 + p);
  g1.setZero();
  g1.topLeftCorner(nx, nx) = r.A;
  g1.block(0, nx, nx, 1) = r.B_u;
  g1.block(0, nx + 1, nx, p) = r.B_v;
  g1.block(nx, 0, nx, nx).setIdentity();
  g1.block(2 * nx, 0, 1, nx) = r.C_y;
  g1.block(2 * nx, nx, 1, 1) = r.D_yu;
  g1.block(2 * nx, nx + 1, 1, p) = r.D_yv;
  g1(2 * nx + 1, nx) = 1.0;
  g1.block(2 * nx + 2, 0, p, nx) = r.C_z;
  g1.block(2 * nx + 2, nx, p, 1) = r.D_zu;
  g1.block(2 * nx + 2, nx + 1, p, p) = r.D_zv;
  g1.block(2 * nx + 2 + p, nx + 1, p, p).setIdentity();
  f.g1 = g1;
  return f;
}

// Rate certificate: Lyapunov matrices feasible for both inequalities at rho.
struct Certificate {
  double rho = 0.0;
  Matrix P;
  Matrix Q;
  Matrix R;
  double margin = 0.0;  // smallest enforced definiteness gap on P, Q
};

struct CertifierOptions {
  double eps = 1e-6;        // strictness P, Q >= eps I
  double feas_tol = 1e-7;   // post-hoc bound on LMI max eigenvalues
  double trace_bound_factor = 1e3;
};

struct ResidualReport {
  double consensus_max_eig = 0.0;
  double disagreement_max_eig = 0.0;
  double p_min_eig = 0.0;
  double q_min_eig = 0.0;
  double r_min_eig = 0.0;
  double r_projection = 0.0;  // magnitude clipped from R's spectrum, if any
  bool pass = false;
};

inline ResidualReport verify_certificate(const Realization& r,
                                         const ProblemClass& pc,
                                         const Certificate& cert,
                                         const CertifierOptions& opts = {}) {
  LmiForms f = assemble_lmis(r, pc, cert.rho);
  ResidualReport rep;
  rep.consensus_max_eig = max_eigenvalue_symmetric(f.consensus(cert.P));
  rep.disagreement_max_eig = max_eigenvalue_symmetric(f.disagreement(cert.Q, cert.R));
  rep.p_min_eig = min_eigenvalue_symmetric(cert.P);
  rep.q_min_eig = min_eigenvalue_symmetric(cert.Q);
  rep.r_min_eig = min_eigenvalue_symmetric(cert.R);
  rep.pass = rep.consensus_max_eig <= opts.feas_tol &&
             rep.disagreement_max_eig <= opts.feas_tol &&
             rep.p_min_eig >= 1e-9 && rep.q_min_eig >= 1e-9 &&
             rep.r_min_eig >= -1e-10;
  return rep;
}

namespace certifier_detail {

// Symmetric coordinate basis for an n x n matrix variable.
inline std::vector<Matrix> sym_basis(int n) {
  std::vector<Matrix> basis;
  basis.reserve(n * (n + 1) / 2);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      Matrix e = Matrix::Zero(n, n);
      e(a, b) = 1.0;
      e(b, a) = 1.0;
      basis.push_back(e);
    }
  return basis;
}

inline Matrix unpack_sym(const Vector& y, int offset, int n) {
  Matrix m(n, n);
  int k = offset;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      m(a, b) = y(k);
      m(b, a) = y(k);
      ++k;
    }
  return m;
}

}  // namespace certifier_detail

// Decides feasibility of the certificate inequalities at the given rate by
// maximizing a common definiteness margin, then verifying the returned
// matrices post hoc with an independent eigenvalue check.
inline std::optional<Certificate> feasible(
    const Realization& r, const ProblemClass& pc, double rho,
    const CertifierOptions& opts = {},
    const FeasibilityOracle* oracle = nullptr) {
  using namespace certifier_detail;
  if (!(opts.eps > 0)) throw ConfigError("feasible: eps must be positive");
  LmiForms f = assemble_lmis(r, pc, rho);
  const int nx = f.n_x, p = f.p;
  const auto bp = sym_basis(nx);
  const auto bq = sym_basis(nx);
  const auto br = sym_basis(p);
  const int np = static_cast<int>(bp.size());
  const int nq = static_cast<int>(bq.size());
  const int nr = static_cast<int>(br.size());
  const int nvar = np + nq + nr + 1;
  const int t_idx = nvar - 1;

  SdpProblem prob;
  prob.num_vars = nvar;
  prob.objective = Vector::Zero(nvar);
  prob.objective(t_idx) = 1.0;

  const Matrix zero_nx = Matrix::Zero(nx, nx);
  const Matrix zero_p = Matrix::Zero(p, p);

  // P - (eps + t) I  and  Q - (eps + t) I
  {
    SdpBlock blk;
    blk.constant = -opts.eps * Matrix::Identity(nx, nx);
    for (int i = 0; i < np; ++i) blk.terms.push_back({i, bp[i]});
    blk.terms.push_back({t_idx, -Matrix::Identity(nx, nx)});
    prob.blocks.push_back(std::move(blk));
  }
  {
    SdpBlock blk;
    blk.constant = -opts.eps * Matrix::Identity(nx, nx);
    for (int i = 0; i < nq; ++i) blk.terms.push_back({np + i, bq[i]});
    blk.terms.push_back({t_idx, -Matrix::Identity(nx, nx)});
    prob.blocks.push_back(std::move(blk));
  }
  // R PSD (no margin: the theorem allows a singular R)
  {
    SdpBlock blk;
    blk.constant = Matrix::Zero(p, p);
    for (int i = 0; i < nr; ++i) blk.terms.push_back({np + nq + i, br[i]});
    prob.blocks.push_back(std::move(blk));
  }
  // -consensus(P) - t I, scaled per block for conditioning
  {
    const Matrix c = f.consensus(zero_nx);
    const double s = 1.0 / std::max(1.0, spectral_norm(f.m0));
    SdpBlock blk;
    blk.constant = -s * c;
    for (int i = 0; i < np; ++i) blk.terms.push_back({i, -s * (f.consensus(bp[i]) - c)});
    blk.terms.push_back({t_idx, -Matrix::Identity(f.consensus_dim(), f.consensus_dim())});
    prob.blocks.push_back(std::move(blk));
  }
  // -disagreement(Q, R) - t I
  {
    const Matrix c = f.disagreement(zero_nx, zero_p);
    const double s = 1.0 / std::max(1.0, spectral_norm(f.m0));
    SdpBlock blk;
    blk.constant = -s * c;
    for (int i = 0; i < nq; ++i)
      blk.terms.push_back({np + i, -s * (f.disagreement(bq[i], zero_p) - c)});
    for (int i = 0; i < nr; ++i)
      blk.terms.push_back({np + nq + i, -s * (f.disagreement(zero_nx, br[i]) - c)});
    blk.terms.push_back(
        {t_idx, -Matrix::Identity(f.disagreement_dim(), f.disagreement_dim())});
    prob.blocks.push_back(std::move(blk));
  }
  // trace bound keeps the margin problem bounded; it scales with the sector
  // multiplier because the certificate's natural size does too
  {
    SdpBlock blk;
    blk.constant = Matrix::Constant(
        1, 1, opts.trace_bound_factor * nx * std::max(1.0, spectral_norm(f.m0)));
    int k = 0;
    for (const auto& e : bp) blk.terms.push_back({k++, Matrix::Constant(1, 1, -e.trace())});
    for (const auto& e : bq) blk.terms.push_back({k++, Matrix::Constant(1, 1, -e.trace())});
    for (const auto& e : br) blk.terms.push_back({k++, Matrix::Constant(1, 1, -e.trace())});
    prob.blocks.push_back(std::move(blk));
  }

  // strictly feasible start: P = Q = I, R = I, t far below every block
  Vector y0 = Vector::Zero(nvar);
  {
    int k = 0;
    for (int a = 0; a < nx; ++a)
      for (int b = a; b < nx; ++b, ++k)
        if (a == b) y0(k) = 1.0;
    for (int a = 0; a < nx; ++a)
      for (int b = a; b < nx; ++b, ++k)
        if (a == b) y0(k) = 1.0;
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b, ++k)
        if (a == b) y0(k) = 1.0;
    double tmax = std::numeric_limits<double>::infinity();
    for (const auto& blk : prob.blocks) {
      bool has_t = false;
      Matrix m = blk.constant;
      for (const auto& [idx, coef] : blk.terms) {
        if (idx == t_idx) {
          has_t = true;
          continue;
        }
        m += y0(idx) * coef;
      }
      if (has_t) tmax = std::min(tmax, min_eigenvalue_symmetric(m));
    }
    y0(t_idx) = tmax - 1.0;
  }

  LogBarrierSolver default_solver;
  const FeasibilityOracle& solver = oracle ? *oracle : default_solver;
  SdpResult sol = solver.maximize(prob, y0);
  if (!sol.converged || !sol.y.allFinite())
    throw SolverError("feasibility oracle failed at rho=" + std::to_string(rho));

  Certificate cert;
  cert.rho = rho;
  cert.P = unpack_sym(sol.y, 0, nx);
  cert.Q = unpack_sym(sol.y, np, nx);
  cert.R = unpack_sym(sol.y, np + nq, p);

  // clip trailing negative dust from R's spectrum
  {
    auto es = sym_eig(cert.R);
    Vector ev = es.eigenvalues();
    if (ev.minCoeff() < 0 && ev.minCoeff() > -1e-10) {
      Vector clipped = ev.cwiseMax(0.0);
      cert.R = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    }
  }

  ResidualReport rep = verify_certificate(r, pc, cert, opts);
  const double pq_floor = opts.eps * (1.0 - 1e-3);
  if (rep.consensus_max_eig > opts.feas_tol ||
      rep.disagreement_max_eig > opts.feas_tol || rep.p_min_eig < pq_floor ||
      rep.q_min_eig < pq_floor || rep.r_min_eig < -1e-10)
    return std::nullopt;
  cert.margin = std::min(rep.p_min_eig, rep.q_min_eig);
  return cert;
}

struct CertifyResult {
  double rho_star = 0.0;
  Certificate cert;
  bool certifiable = false;  // false: infeasible at the bracket top (rho = 2)
};

// Bisection on the rate. Feasibility is monotone in rho, so the bracket
// halves cleanly; the certificate from the feasible endpoint is returned.
inline CertifyResult certify_rate(const Realization& r, const ProblemClass& pc,
                                  double tol = 1e-4,
                                  const CertifierOptions& opts = {},
                                  const FeasibilityOracle* oracle = nullptr) {
  if (!(tol > 0)) throw ConfigError("certify_rate: tol must be positive");
  CertifyResult out;
  double lo = 0.0, hi = 2.0;
  auto top = feasible(r, pc, hi, opts, oracle);
  if (!top) return out;  // uncertifiable within the bracket
  Certificate best = *top;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    auto c = feasible(r, pc, mid, opts, oracle);
    if (c) {
      hi = mid;
      best = *c;
    } else {
      lo = mid;
    }
  }
  // prefer a Lyapunov metric with unit minimum eigenvalue; scaling up
  // also magnifies any positive dust in the verified inequalities, so the
  // scaled certificate is kept only when it still verifies
  const double lam = std::min(min_eigenvalue_symmetric(best.P),
                              min_eigenvalue_symmetric(best.Q));
  if (lam > 0 && lam < 1.0) {
    Certificate scaled = best;
    const double s = 1.0 / lam;
    scaled.P *= s;
    scaled.Q *= s;
    scaled.R *= s;
    scaled.margin *= s;
    if (verify_certificate(r, pc, scaled, opts).pass) best = scaled;
  }
  out.rho_star = hi;
  out.cert = best;
  out.certifiable = true;
  return out;
}

// Lyapunov value x~' (Pi (x) P + (I - Pi) (x) Q) x~ for the stacked error
// state ((n * n_x) x d, agent-major).
inline double lyapunov_value(const Certificate& cert, const Matrix& x_tilde, int n) {
  const int nx = static_cast<int>(cert.P.rows());
  if (x_tilde.rows() != static_cast<Eigen::Index>(n) * nx)
    throw DimensionError("lyapunov_value: state has wrong length");
  const Matrix pi = consensus_projector(n);
  const Matrix t = kron(pi, cert.P) + kron(Matrix::Identity(n, n) - pi, cert.Q);
  return (x_tilde.transpose() * t * x_tilde).trace();
}

// Condition number of the Lyapunov metric T = Pi (x) P + (I-Pi) (x) Q; its
// spectrum is the union of P's and Q's for n >= 2.
inline double lyapunov_condition(const Certificate& cert) {
  const double lo = std::min(min_eigenvalue_symmetric(cert.P),
                             min_eigenvalue_symmetric(cert.Q));
  const double hi = std::max(max_eigenvalue_symmetric(cert.P),
                             max_eigenvalue_symmetric(cert.Q));
  if (lo <= 0) throw SolverError("lyapunov_condition: metric not positive definite");
  return hi / lo;
}

}  // namespace dopt
