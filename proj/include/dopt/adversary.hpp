#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <random>

#include "dopt/certifier.hpp"
#include "dopt/netsim.hpp"

namespace dopt {

// Per-agent sector form -2 (u - m y)'(u - L y); nonnegative exactly when
// (y, u) is consistent with some gradient in the sector [m, L].
inline double sector_violation(const RowVector& y_err, const RowVector& u_err,
                               double m, double L) {
  if (y_err.cols() != u_err.cols())
    throw DimensionError("sector_violation: dimension mismatch");
  return -2.0 * (u_err - m * y_err).dot(u_err - L * y_err);
}

namespace adversary_detail {

// (I - Pi) (x) I_p applied to a stacked (n*p) x d matrix: removes the
// agent-mean of every communicated component.
inline Matrix remove_agent_mean(const Matrix& s, int n, int p) {
  Matrix out = s;
  for (int c = 0; c < p; ++c) {
    RowVector mean = RowVector::Zero(s.cols());
    for (int i = 0; i < n; ++i) mean += s.row(i * p + c);
    mean /= n;
    for (int i = 0; i < n; ++i) out.row(i * p + c) -= mean;
  }
  return out;
}

}  // namespace adversary_detail

// Graph form [z; v]' (M1 (x) (I-Pi) (x) R) [z; v] with a PSD weight on the
// communicated components; nonnegative for every admissible gossip step at
// gap sigma and every such weight.
inline double graph_violation_weighted(const Matrix& z_err, const Matrix& v_err,
                                       double sigma, int n, const Matrix& weight) {
  if (z_err.rows() != v_err.rows() || z_err.cols() != v_err.cols())
    throw DimensionError("graph_violation: dimension mismatch");
  if (z_err.rows() % n != 0) throw DimensionError("graph_violation: bad stacking");
  const int p = static_cast<int>(z_err.rows()) / n;
  if (weight.rows() != p || weight.cols() != p)
    throw DimensionError("graph_violation: bad weight size");
  const Matrix pz = adversary_detail::remove_agent_mean(z_err, n, p);
  const Matrix pv = adversary_detail::remove_agent_mean(v_err, n, p);
  const Matrix rw = kron(Matrix::Identity(n, n), weight);
  const double zz = z_err.cwiseProduct(rw * pz).sum();
  const double zv = z_err.cwiseProduct(rw * pv).sum();
  const double vv = v_err.cwiseProduct(rw * pv).sum();
  return (sigma * sigma - 1.0) * zz + 2.0 * zv - vv;
}

inline double graph_violation(const Matrix& z_err, const Matrix& v_err,
                              double sigma, int n) {
  const int p = static_cast<int>(z_err.rows()) / std::max(n, 1);
  return graph_violation_weighted(z_err, v_err, sigma, n, Matrix::Identity(p, p));
}

namespace adversary_detail {

struct QuadForm {
  Matrix H;
  Vector b;
  double c = 0.0;

  double eval(const Vector& x) const { return 0.5 * x.dot(H * x) + b.dot(x) + c; }
  Vector grad(const Vector& x) const { return H * x + b; }
};

// Exact quadratic form of f by polarization (f must be quadratic).
inline QuadForm quadratize(const std::function<double(const Vector&)>& f, int dim) {
  QuadForm q;
  q.H = Matrix::Zero(dim, dim);
  q.b = Vector::Zero(dim);
  q.c = f(Vector::Zero(dim));
  std::vector<double> fp(dim), fm(dim);
  for (int i = 0; i < dim; ++i) {
    Vector e = Vector::Zero(dim);
    e(i) = 1.0;
    fp[i] = f(e);
    fm[i] = f(-e);
    q.b(i) = 0.5 * (fp[i] - fm[i]);
    q.H(i, i) = fp[i] + fm[i] - 2.0 * q.c;
  }
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      Vector e = Vector::Zero(dim);
      e(i) = 1.0;
      e(j) = 1.0;
      const double v = f(e) - fp[i] - fp[j] + q.c;
      q.H(i, j) = v;
      q.H(j, i) = v;
    }
  return q;
}

// Augmented-Lagrangian local maximizer:
//   maximize J(x) s.t. g_i(x) >= 0, h_j(x) = 0
// with all pieces quadratic. Levenberg-damped Newton on the AL.
struct AlResult {
  Vector x;
  double objective = 0.0;
  double worst_ineq = 0.0;  // min_i g_i at the solution
  double worst_eq = 0.0;    // max_j |h_j|
  bool feasible = false;
};

inline AlResult augmented_lagrangian_max(const QuadForm& J,
                                         const std::vector<QuadForm>& ineq,
                                         const std::vector<QuadForm>& eq,
                                         Vector x) {
  const int dim = static_cast<int>(x.size());
  const int ni = static_cast<int>(ineq.size());
  const int ne = static_cast<int>(eq.size());
  Vector lam_i = Vector::Zero(ni);
  Vector lam_e = Vector::Zero(ne);
  double mu = 10.0;
  double prev_viol = std::numeric_limits<double>::infinity();

  // warm multipliers from a least-squares KKT fit at the start; without
  // them the first inner pass abandons boundary-optimal starting points
  {
    std::vector<int> active;
    const double scale = 1.0 + std::abs(J.eval(x));
    for (int i = 0; i < ni; ++i)
      if (ineq[i].eval(x) < 1e-6 * scale) active.push_back(i);
    const int na = static_cast<int>(active.size());
    if (na + ne > 0) {
      Matrix jac(dim, na + ne);
      for (int a = 0; a < na; ++a) jac.col(a) = ineq[active[a]].grad(x);
      for (int j = 0; j < ne; ++j) jac.col(na + j) = eq[j].grad(x);
      Vector mult = solve_least_squares(jac, Matrix(-J.grad(x))).col(0);
      for (int a = 0; a < na; ++a) lam_i(active[a]) = std::max(0.0, mult(a));
      for (int j = 0; j < ne; ++j) lam_e(j) = -mult(na + j);
    }
  }

  auto al_value = [&](const Vector& xx) {
    double val = -J.eval(xx);
    for (int i = 0; i < ni; ++i) {
      const double g = ineq[i].eval(xx);
      const double a = std::max(0.0, lam_i(i) - mu * g);
      val += (a * a - lam_i(i) * lam_i(i)) / (2.0 * mu);
    }
    for (int j = 0; j < ne; ++j) {
      const double h = eq[j].eval(xx);
      val += lam_e(j) * h + 0.5 * mu * h * h;
    }
    return val;
  };

  for (int outer = 0; outer < 40; ++outer) {
    // inner: damped Newton on the AL
    double tau = 1e-8;
    for (int inner = 0; inner < 60; ++inner) {
      Vector grad = -J.grad(x);
      Matrix hess = -J.H;
      for (int i = 0; i < ni; ++i) {
        const double g = ineq[i].eval(x);
        const double a = std::max(0.0, lam_i(i) - mu * g);
        if (a > 0.0) {
          const Vector gg = ineq[i].grad(x);
          grad -= a * gg;
          hess += mu * gg * gg.transpose() - a * ineq[i].H;
        }
      }
      for (int j = 0; j < ne; ++j) {
        const double h = eq[j].eval(x);
        const Vector gh = eq[j].grad(x);
        grad += (lam_e(j) + mu * h) * gh;
        hess += mu * gh * gh.transpose() + (lam_e(j) + mu * h) * eq[j].H;
      }
      const double gnorm = grad.norm();
      if (gnorm < 1e-13 * (1.0 + std::abs(al_value(x)))) break;

      Vector step;
      bool ok = false;
      const double base = al_value(x);
      for (int attempt = 0; attempt < 25 && !ok; ++attempt) {
        Eigen::LDLT<Matrix> ldlt(hess + tau * Matrix::Identity(dim, dim));
        step = ldlt.solve(-grad);
        if (!step.allFinite() || grad.dot(step) >= 0) {
          tau = std::max(tau * 10.0, 1e-8);
          continue;
        }
        double t = 1.0;
        for (int ls = 0; ls < 40; ++ls) {
          if (al_value(x + t * step) <= base + 1e-4 * t * grad.dot(step)) {
            x += t * step;
            ok = true;
            break;
          }
          t *= 0.5;
        }
        if (!ok) tau = std::max(tau * 10.0, 1e-8);
      }
      if (!ok) break;
      tau = std::max(tau / 3.0, 1e-10);
    }

    // multiplier and penalty updates
    double viol = 0.0;
    for (int i = 0; i < ni; ++i) {
      const double g = ineq[i].eval(x);
      viol = std::max(viol, std::max(0.0, -g));
      lam_i(i) = std::max(0.0, lam_i(i) - mu * g);
    }
    for (int j = 0; j < ne; ++j) {
      const double h = eq[j].eval(x);
      viol = std::max(viol, std::abs(h));
      lam_e(j) += mu * h;
    }
    if (viol < 1e-13) break;
    if (viol > 0.25 * prev_viol) mu = std::min(mu * 8.0, 1e12);
    prev_viol = viol;
  }

  // KKT polish: Newton on the stationarity system of the active set, which
  // removes the penalty smearing left by the AL loop
  {
    std::vector<int> active;
    for (int i = 0; i < ni; ++i)
      if (ineq[i].eval(x) < 1e-4 * (1.0 + std::abs(J.eval(x)))) active.push_back(i);
    const int na = static_cast<int>(active.size());
    const int total = dim + na + ne;

    Vector z(total);
    z.head(dim) = x;
    {
      // least-squares multipliers from stationarity of J + sum lam g + sum nu h
      Matrix jac(dim, na + ne);
      for (int a = 0; a < na; ++a) jac.col(a) = ineq[active[a]].grad(x);
      for (int j = 0; j < ne; ++j) jac.col(na + j) = eq[j].grad(x);
      if (na + ne > 0)
        z.tail(na + ne) = solve_least_squares(jac, Matrix(-J.grad(x))).col(0);
    }

    auto kkt = [&](const Vector& zz, Vector* F, Matrix* Jm) {
      const Vector xx = zz.head(dim);
      F->resize(total);
      Vector stat = J.grad(xx);
      for (int a = 0; a < na; ++a) stat += zz(dim + a) * ineq[active[a]].grad(xx);
      for (int j = 0; j < ne; ++j) stat += zz(dim + na + j) * eq[j].grad(xx);
      F->head(dim) = stat;
      for (int a = 0; a < na; ++a) (*F)(dim + a) = ineq[active[a]].eval(xx);
      for (int j = 0; j < ne; ++j) (*F)(dim + na + j) = eq[j].eval(xx);
      if (Jm) {
        Jm->setZero(total, total);
        Matrix hxx = J.H;
        for (int a = 0; a < na; ++a) hxx += zz(dim + a) * ineq[active[a]].H;
        for (int j = 0; j < ne; ++j) hxx += zz(dim + na + j) * eq[j].H;
        Jm->topLeftCorner(dim, dim) = hxx;
        for (int a = 0; a < na; ++a) {
          Jm->block(0, dim + a, dim, 1) = ineq[active[a]].grad(xx);
          Jm->block(dim + a, 0, 1, dim) = ineq[active[a]].grad(xx).transpose();
        }
        for (int j = 0; j < ne; ++j) {
          Jm->block(0, dim + na + j, dim, 1) = eq[j].grad(xx);
          Jm->block(dim + na + j, 0, 1, dim) = eq[j].grad(xx).transpose();
        }
      }
    };

    Vector F, Fn;
    Matrix Jm;
    kkt(z, &F, nullptr);
    for (int it = 0; it < 15 && F.norm() > 1e-13; ++it) {
      kkt(z, &F, &Jm);
      Eigen::FullPivLU<Matrix> lu(Jm);
      if (!lu.isInvertible()) break;
      Vector dz = lu.solve(-F);
      double t = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 20; ++ls) {
        Vector zn = z + t * dz;
        kkt(zn, &Fn, nullptr);
        if (Fn.allFinite() && Fn.norm() < F.norm()) {
          z = zn;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) break;
    }
    kkt(z, &F, nullptr);
    const Vector xp = z.head(dim);
    bool acceptable = F.norm() < 1e-10 * (1.0 + std::abs(J.eval(x)));
    for (int i = 0; i < ni && acceptable; ++i)
      if (ineq[i].eval(xp) < -1e-11) acceptable = false;
    for (int j = 0; j < ne && acceptable; ++j)
      if (std::abs(eq[j].eval(xp)) > 1e-11) acceptable = false;
    if (acceptable && J.eval(xp) >= J.eval(x) - 1e-12) x = xp;
  }

  AlResult res;
  res.x = x;
  res.objective = J.eval(x);
  res.worst_ineq = std::numeric_limits<double>::infinity();
  for (const auto& g : ineq) res.worst_ineq = std::min(res.worst_ineq, g.eval(x));
  if (ineq.empty()) res.worst_ineq = 0.0;
  res.worst_eq = 0.0;
  for (const auto& h : eq) res.worst_eq = std::max(res.worst_eq, std::abs(h.eval(x)));
  res.feasible = res.worst_ineq >= -1e-7 && res.worst_eq <= 1e-7;
  return res;
}

}  // namespace adversary_detail

// Static "planted mode" adversary: per-agent sector gains and a uniform
// gossip gain chosen to maximize the closed-loop spectral radius on the
// invariant-consistent subspace. Gains may be complex: a complex sector
// gain is realizable as a rotation block when d >= 2, and a complex gossip
// gain as a rotation of a two-plane inside the disagreement subspace when
// n >= 3. The dominant eigenplane and its signal responses seed the greedy
// solver.
struct StaticAdversary {
  Matrix plane;       // (n*n_x) x 2 basis of the dominant orbit plane
  Matrix plane_pinv;  // 2 x (n*n_x)
  Matrix u_resp;      // n x 2: u response in plane coordinates
  Matrix v_resp;      // (n*p) x 2
  double radius = 0.0;

  // plane-consistent static response to a stacked state
  std::pair<Matrix, Matrix> respond(const Matrix& x) const {
    const Matrix coords = plane_pinv * x;  // 2 x d
    return {u_resp * coords, v_resp * coords};
  }
};

namespace adversary_detail {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

struct StaticMapsC {
  ComplexMatrix u_map, v_map, closed;
};

inline std::optional<StaticMapsC> static_maps(const Realization& r,
                                              const ComplexVector& gains,
                                              Complex gossip, int n) {
  const int nx = r.n_states(), p = r.n_comm();
  const Matrix pi = consensus_projector(n);
  const Matrix in = Matrix::Identity(n, n);
  const ComplexMatrix gp =
      kron(gossip.real() * (in - pi), Matrix::Identity(p, p)).cast<Complex>() +
      Complex(0, 1) * kron(gossip.imag() * (in - pi), Matrix::Identity(p, p)).cast<Complex>();
  const ComplexMatrix s = gains.asDiagonal();

  ComplexMatrix cy = kron(in, r.C_y).cast<Complex>(), cz = kron(in, r.C_z).cast<Complex>();
  ComplexMatrix dyu = kron(in, r.D_yu).cast<Complex>(), dyv = kron(in, r.D_yv).cast<Complex>();
  ComplexMatrix dzu = kron(in, r.D_zu).cast<Complex>(), dzv = kron(in, r.D_zv).cast<Complex>();

  // solve jointly for [u; v] given x: u = S y, v = GP z
  ComplexMatrix w(n + n * p, n + n * p);
  w.topLeftCorner(n, n) = ComplexMatrix::Identity(n, n) - s * dyu;
  w.topRightCorner(n, n * p) = -s * dyv;
  w.bottomLeftCorner(n * p, n) = -gp * dzu;
  w.bottomRightCorner(n * p, n * p) = ComplexMatrix::Identity(n * p, n * p) - gp * dzv;
  ComplexMatrix rhs(n + n * p, n * nx);
  rhs.topRows(n) = s * cy;
  rhs.bottomRows(n * p) = gp * cz;
  Eigen::FullPivLU<ComplexMatrix> lu(w);
  if (!lu.isInvertible()) return std::nullopt;
  ComplexMatrix uv = lu.solve(rhs);

  StaticMapsC out;
  out.u_map = uv.topRows(n);
  out.v_map = uv.bottomRows(n * p);
  out.closed = kron(in, r.A).cast<Complex>() + kron(in, r.B_u).cast<Complex>() * out.u_map +
               kron(in, r.B_v).cast<Complex>() * out.v_map;
  return out;
}

}  // namespace adversary_detail

inline std::optional<StaticAdversary> best_static_adversary(const Realization& r,
                                                            const ProblemClass& pc0,
                                                            int n, int d,
                                                            unsigned seed = 0) {
  using namespace adversary_detail;
  const ProblemClass pc = pc0.regularized();
  const int nx = r.n_states();
  const double mid = 0.5 * (pc.m + pc.L), rad = 0.5 * (pc.L - pc.m);
  const bool complex_sector = d >= 2;
  const bool complex_gossip = d >= 2 || n >= 3;

  // invariant-consistent subspace (rows with F_u = 0 constrain the state)
  std::vector<Vector> rows;
  for (int qi = 0; qi < r.n_invariants(); ++qi) {
    if (r.F_u.row(qi).norm() != 0.0) continue;
    Vector row = Vector::Zero(n * nx);
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < nx; ++s) row(i * nx + s) = r.F_x(qi, s);
    rows.push_back(row);
  }
  Matrix basis;
  if (rows.empty()) {
    basis = Matrix::Identity(n * nx, n * nx);
  } else {
    Matrix e(static_cast<int>(rows.size()), n * nx);
    for (size_t i = 0; i < rows.size(); ++i) e.row(i) = rows[i];
    basis = nullspace_basis(e);
  }
  const ComplexMatrix basis_c = basis.cast<Complex>();

  // parameter vector: sector gains as disk coordinates (angle, radius) per
  // agent when rotations are realizable, plain slopes otherwise; then the
  // gossip gain as disk coordinates (phase, radius) or a real gain
  const int sector_len = complex_sector ? 2 * n : n;
  const int gossip_len = complex_gossip ? 2 : 1;
  const int par_len = sector_len + gossip_len;
  auto gains_of = [&](const Vector& par) -> ComplexVector {
    ComplexVector g(n);
    for (int i = 0; i < n; ++i) {
      if (complex_sector) {
        const double rr = rad * std::clamp(par(n + i), 0.0, 1.0);
        g(i) = Complex(mid + rr * std::cos(par(i)), rr * std::sin(par(i)));
      } else {
        g(i) = Complex(std::clamp(par(i), pc.m, pc.L), 0.0);
      }
    }
    return g;
  };
  auto gossip_of = [&](const Vector& par) -> Complex {
    if (complex_gossip) {
      const double rr = pc.sigma * std::clamp(par(sector_len + 1), 0.0, 1.0);
      return Complex(1.0 + rr * std::cos(par(sector_len)), rr * std::sin(par(sector_len)));
    }
    return Complex(std::clamp(par(sector_len), 1.0 - pc.sigma, 1.0 + pc.sigma), 0.0);
  };

  double best_radius = -1.0;
  Vector best_par;
  ComplexVector best_eigvec;
  StaticMapsC best_maps;
  auto consider = [&](const Vector& par) {
    auto maps = static_maps(r, gains_of(par), gossip_of(par), n);
    if (!maps) return;
    ComplexMatrix restricted = basis_c.adjoint() * maps->closed * basis_c;
    Eigen::ComplexEigenSolver<ComplexMatrix> es(restricted);
    if (es.info() != Eigen::Success) return;
    int top = 0;
    for (int i = 1; i < restricted.rows(); ++i)
      if (std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(top))) top = i;
    const double radius = std::abs(es.eigenvalues()(top));
    if (radius <= best_radius) return;
    best_radius = radius;
    best_par = par;
    best_eigvec = basis_c * es.eigenvectors().col(top);
    best_maps = *maps;
  };

  // sector patterns (angles at unit disk radius, or slope sign patterns)
  std::vector<Vector> patterns;  // sector part only, length sector_len
  if (complex_sector) {
    const int steps = 12;
    for (int t = 0; t < steps; ++t) {
      Vector par = Vector::Zero(sector_len);
      par.head(n).setConstant(2.0 * M_PI * t / steps);
      par.tail(n).setOnes();
      patterns.push_back(par);
    }
    {
      Vector par = Vector::Zero(sector_len);  // the sector midpoint
      patterns.push_back(par);
    }
  } else if (n <= 4) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      Vector s(n);
      for (int i = 0; i < n; ++i) s(i) = (mask >> i) & 1 ? pc.L : pc.m;
      patterns.push_back(s);
    }
  } else {
    patterns.push_back(Vector::Constant(n, pc.m));
    patterns.push_back(Vector::Constant(n, pc.L));
    patterns.push_back(Vector::Constant(n, mid));
    for (int i = 0; i < n; ++i) {
      Vector s = Vector::Constant(n, pc.m);
      s(i) = pc.L;
      patterns.push_back(s);
      Vector t = Vector::Constant(n, pc.L);
      t(i) = pc.m;
      patterns.push_back(t);
    }
    std::mt19937_64 rng(seed + 12345);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int k = 0; k < 30; ++k) {
      Vector s(n);
      for (int i = 0; i < n; ++i) s(i) = unif(rng) < 0.5 ? pc.m : pc.L;
      patterns.push_back(s);
    }
  }
  // gossip grid over the full admissible disk (or the real interval)
  std::vector<Vector> gossip_grid;  // length gossip_len each
  if (complex_gossip) {
    for (double rr : {1.0, 0.7, 0.35}) {
      const int gsteps = 17;
      for (int t = 0; t < gsteps; ++t) {
        Vector g(2);
        g << 2.0 * M_PI * t / gsteps, rr;
        gossip_grid.push_back(g);
      }
    }
    Vector g(2);
    g << 0.0, 0.0;
    gossip_grid.push_back(g);
  } else {
    for (int t = 0; t <= 33; ++t)
      gossip_grid.push_back(
          Vector::Constant(1, (1.0 - pc.sigma) + 2.0 * pc.sigma * t / 33.0));
  }

  for (const auto& pat : patterns)
    for (const auto& g : gossip_grid) {
      Vector par(par_len);
      par.head(sector_len) = pat;
      par.tail(gossip_len) = g;
      consider(par);
    }
  if (best_radius < 0) return std::nullopt;

  // coordinate pattern-search refinement of all parameters
  {
    Vector step(par_len);
    if (complex_sector) {
      step.head(n).setConstant(0.3);           // angles
      step.segment(n, n).setConstant(0.2);     // disk radii
    } else {
      step.head(n).setConstant(0.25 * (pc.L - pc.m));
    }
    if (complex_gossip) {
      step(sector_len) = 0.3;
      step(sector_len + 1) = 0.2;
    } else {
      step(sector_len) = 0.1 * pc.sigma;
    }
    for (int it = 0; it < 80 && step.maxCoeff() > 1e-10; ++it) {
      bool improved = false;
      for (int i = 0; i < par_len; ++i) {
        for (double delta : {-step(i), step(i)}) {
          Vector par = best_par;
          par(i) += delta;
          const double before = best_radius;
          consider(par);
          if (best_radius > before) improved = true;
        }
      }
      if (!improved) step *= 0.5;
    }
  }

  StaticAdversary adv;
  adv.radius = best_radius;
  const ComplexVector w = best_eigvec;
  adv.plane.resize(n * nx, 2);
  adv.plane.col(0) = w.real();
  adv.plane.col(1) = w.imag();
  if (adv.plane.col(1).norm() < 1e-12 * adv.plane.col(0).norm())
    adv.plane.col(1).setZero();
  const ComplexVector uw = best_maps.u_map * w;
  const ComplexVector vw = best_maps.v_map * w;
  adv.u_resp.resize(n, 2);
  adv.u_resp.col(0) = uw.real();
  adv.u_resp.col(1) = uw.imag();
  adv.v_resp.resize(n * r.n_comm(), 2);
  adv.v_resp.col(0) = vw.real();
  adv.v_resp.col(1) = vw.imag();
  adv.plane_pinv = solve_least_squares(adv.plane, Matrix::Identity(n * nx, n * nx));
  return adv;
}

// One step of the greedy worst-case construction: maximize the Lyapunov
// increment over relaxed gradient/gossip signals.
struct GreedyStepProblem {
  Realization r;
  ProblemClass pc;
  Certificate cert;
  Matrix x;  // current stacked error state, (n*n_x) x d; ignored when include_x0
  int n = 2;
  int d = 1;
  int restarts = 8;
  unsigned seed = 0;
  bool include_x0 = false;  // first step: x0 is a variable, normalized V0 = 1
  std::optional<StaticAdversary> static_adv;  // extra tightness-oriented starts
};

struct GreedyStepResult {
  Matrix u;       // n x d
  Matrix v;       // (n*p) x d
  Matrix x0;      // (n*n_x) x d; only set when include_x0
  Matrix x_next;  // state after the step
  Matrix y;       // n x d
  Matrix z;       // (n*p) x d
  double increment = 0.0;     // V(x+) - rho^2 V(x)
  double min_sector = 0.0;    // per-agent sector form minimum
  double graph_value = 0.0;   // graph form value
  double invariant_residual = 0.0;
  double vsum_residual = 0.0;
};

namespace adversary_detail {

struct ThetaLayout {
  int n, d, nx, p;
  bool with_x;
  int x_len, u_len, v_len;

  explicit ThetaLayout(const Realization& r, int n_, int d_, bool with_x_)
      : n(n_), d(d_), nx(r.n_states()), p(r.n_comm()), with_x(with_x_) {
    x_len = with_x ? n * nx * d : 0;
    u_len = n * d;
    v_len = n * p * d;
  }
  int total() const { return x_len + u_len + v_len; }

  Matrix x_of(const Vector& th) const {
    Matrix m(n * nx, d);
    for (int rr = 0; rr < n * nx; ++rr)
      for (int cc = 0; cc < d; ++cc) m(rr, cc) = th(rr * d + cc);
    return m;
  }
  Matrix u_of(const Vector& th) const {
    Matrix m(n, d);
    for (int rr = 0; rr < n; ++rr)
      for (int cc = 0; cc < d; ++cc) m(rr, cc) = th(x_len + rr * d + cc);
    return m;
  }
  Matrix v_of(const Vector& th) const {
    Matrix m(n * p, d);
    for (int rr = 0; rr < n * p; ++rr)
      for (int cc = 0; cc < d; ++cc) m(rr, cc) = th(x_len + u_len + rr * d + cc);
    return m;
  }
  Vector pack(const Matrix& x, const Matrix& u, const Matrix& v) const {
    Vector th(total());
    int k = 0;
    if (with_x)
      for (int rr = 0; rr < n * nx; ++rr)
        for (int cc = 0; cc < d; ++cc) th(k++) = x(rr, cc);
    for (int rr = 0; rr < n; ++rr)
      for (int cc = 0; cc < d; ++cc) th(k++) = u(rr, cc);
    for (int rr = 0; rr < n * p; ++rr)
      for (int cc = 0; cc < d; ++cc) th(k++) = v(rr, cc);
    return th;
  }
};

struct SignalMaps {
  Matrix y, z, x_next;
};

inline SignalMaps signals_from(const Realization& r, const Matrix& x,
                               const Matrix& u, const Matrix& v) {
  const int nx = r.n_states(), p = r.n_comm();
  const int n = static_cast<int>(u.rows());
  SignalMaps s;
  s.y.resize(n, u.cols());
  s.z.resize(n * p, u.cols());
  s.x_next.resize(n * nx, u.cols());
  for (int i = 0; i < n; ++i) {
    auto xi = x.middleRows(i * nx, nx);
    auto vi = v.middleRows(i * p, p);
    s.y.row(i) = r.C_y * xi + r.D_yu * u.row(i) + r.D_yv * vi;
    s.z.middleRows(i * p, p) = r.C_z * xi + r.D_zu * u.row(i) + r.D_zv * vi;
    s.x_next.middleRows(i * nx, nx) = r.A * xi + r.B_u * u.row(i) + r.B_v * vi;
  }
  return s;
}

}  // namespace adversary_detail

inline GreedyStepResult greedy_step(const GreedyStepProblem& prob,
                                    const std::optional<std::pair<Matrix, Matrix>>& warm = {});

namespace adversary_detail {

// The constraint set is a cone and the objective is homogeneous, so the
// subproblem can be solved at unit Lyapunov scale; this keeps the inner
// solver's absolute tolerances meaningful as the trajectory decays.
inline GreedyStepResult greedy_step_scaled(const GreedyStepProblem& prob,
                                           const std::optional<std::pair<Matrix, Matrix>>& warm,
                                           double scale) {
  GreedyStepProblem scaled = prob;
  scaled.x = prob.x / scale;
  std::optional<std::pair<Matrix, Matrix>> w2 = warm;
  if (w2) *w2 = {warm->first / scale, warm->second / scale};
  GreedyStepResult res = greedy_step(scaled, w2);
  res.u *= scale;
  res.v *= scale;
  res.x_next *= scale;
  res.y *= scale;
  res.z *= scale;
  res.increment *= scale * scale;
  res.min_sector *= scale * scale;
  res.graph_value *= scale * scale;
  res.invariant_residual *= scale;
  res.vsum_residual *= scale;
  return res;
}

}  // namespace adversary_detail

inline GreedyStepResult greedy_step(const GreedyStepProblem& prob,
                                    const std::optional<std::pair<Matrix, Matrix>>& warm) {
  using namespace adversary_detail;
  const Realization& r = prob.r;
  const int n = prob.n, d = prob.d, nx = r.n_states(), p = r.n_comm();
  const ProblemClass pc = prob.pc.regularized();
  const double rho2 = prob.cert.rho * prob.cert.rho;
  const Matrix pi = consensus_projector(n);
  const Matrix t_metric = kron(pi, prob.cert.P) +
                          kron(Matrix::Identity(n, n) - pi, prob.cert.Q);

  ThetaLayout lay(r, n, d, prob.include_x0);

  // linear equalities E theta = e0: network invariant and 1'v = 0
  std::vector<Vector> erows;
  std::vector<double> evals;
  const int q = r.n_invariants();
  for (int qi = 0; qi < q; ++qi) {
    const bool fu_zero = r.F_u.row(qi).norm() == 0.0;
    if (!prob.include_x0 && fu_zero) continue;  // constraint rests on the fixed state
    for (int cc = 0; cc < d; ++cc) {
      Vector row = Vector::Zero(lay.total());
      double rhs = 0.0;
      for (int i = 0; i < n; ++i) {
        if (prob.include_x0) {
          for (int s = 0; s < nx; ++s) row((i * nx + s) * d + cc) += r.F_x(qi, s);
        } else {
          rhs -= r.F_x.row(qi).dot(prob.x.middleRows(i * nx, nx).col(cc));
        }
        row(lay.x_len + i * d + cc) += r.F_u(qi, 0);
      }
      erows.push_back(row);
      evals.push_back(rhs);
    }
  }
  for (int c = 0; c < p; ++c)
    for (int cc = 0; cc < d; ++cc) {
      Vector row = Vector::Zero(lay.total());
      for (int i = 0; i < n; ++i) row(lay.x_len + lay.u_len + (i * p + c) * d + cc) = 1.0;
      erows.push_back(row);
      evals.push_back(0.0);
    }

  Matrix E(erows.size(), lay.total());
  Vector e0(erows.size());
  for (size_t i = 0; i < erows.size(); ++i) {
    E.row(i) = erows[i];
    e0(i) = evals[i];
  }
  Matrix basis;
  Vector theta_p = Vector::Zero(lay.total());
  if (E.rows() > 0) {
    basis = nullspace_basis(E);
    theta_p = solve_least_squares(E, Matrix(e0)).col(0);
    if ((E * theta_p - e0).norm() > 1e-8 * (1.0 + e0.norm()))
      throw SolverError("greedy_step: equality constraints inconsistent");
  } else {
    basis = Matrix::Identity(lay.total(), lay.total());
  }
  const int dim = static_cast<int>(basis.cols());
  auto theta_of = [&](const Vector& xi) -> Vector { return theta_p + basis * xi; };
  auto xi_of = [&](const Vector& th) -> Vector {
    return basis.transpose() * (th - theta_p);
  };

  auto vcal = [&](const Matrix& xs) { return (xs.transpose() * t_metric * xs).trace(); };
  const double v_now = prob.include_x0 ? 0.0 : vcal(prob.x);

  auto objective_fn = [&](const Vector& xi) {
    const Vector th = theta_of(xi);
    const Matrix x = prob.include_x0 ? lay.x_of(th) : prob.x;
    auto s = signals_from(r, x, lay.u_of(th), lay.v_of(th));
    return vcal(s.x_next) - rho2 * (prob.include_x0 ? vcal(x) : v_now);
  };
  QuadForm J = quadratize(objective_fn, dim);

  std::vector<QuadForm> ineq;
  for (int i = 0; i < n; ++i) {
    auto fn = [&, i](const Vector& xi) {
      const Vector th = theta_of(xi);
      const Matrix x = prob.include_x0 ? lay.x_of(th) : prob.x;
      auto s = signals_from(r, x, lay.u_of(th), lay.v_of(th));
      return sector_violation(s.y.row(i), lay.u_of(th).row(i), pc.m, pc.L);
    };
    ineq.push_back(quadratize(fn, dim));
  }
  {
    auto fn = [&](const Vector& xi) {
      const Vector th = theta_of(xi);
      const Matrix x = prob.include_x0 ? lay.x_of(th) : prob.x;
      auto s = signals_from(r, x, lay.u_of(th), lay.v_of(th));
      return graph_violation(s.z, lay.v_of(th), pc.sigma, n);
    };
    ineq.push_back(quadratize(fn, dim));
  }
  if (p > 1) {
    // the certificate's own weighted instance; valid for every admissible
    // gossip step and required for the increment to stay nonpositive
    Matrix rw = prob.cert.R;
    const double rn = spectral_norm(rw);
    if (rn > 0) rw /= rn;
    auto fn = [&, rw](const Vector& xi) {
      const Vector th = theta_of(xi);
      const Matrix x = prob.include_x0 ? lay.x_of(th) : prob.x;
      auto s = signals_from(r, x, lay.u_of(th), lay.v_of(th));
      return graph_violation_weighted(s.z, lay.v_of(th), pc.sigma, n, rw);
    };
    ineq.push_back(quadratize(fn, dim));
  }
  std::vector<QuadForm> eq;
  if (prob.include_x0) {
    auto fn = [&](const Vector& xi) { return vcal(lay.x_of(theta_of(xi))) - 1.0; };
    eq.push_back(quadratize(fn, dim));
  }

  // starting points: physically realizable signals (sector-slope gradient,
  // admissible gossip), the warm start, and random perturbations
  std::mt19937_64 rng(prob.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_state = [&]() {
    Matrix x(n * nx, d);
    for (int rr = 0; rr < n * nx; ++rr)
      for (int cc = 0; cc < d; ++cc) x(rr, cc) = gauss(rng);
    const double val = vcal(x);
    if (val > 0) x /= std::sqrt(val);
    return x;
  };
  std::vector<Vector> starts;
  const auto order = evaluation_order(r);
  auto physical_start = [&](const Matrix& xbase, double slope, double lapscale) {
    const Matrix lap = lapscale * (Matrix::Identity(n, n) - pi);
    auto grad = [&](int, const RowVector& yrow) -> RowVector { return slope * yrow; };
    auto s = netsim_detail::evaluate_round(r, xbase, lap, grad, order);
    return lay.pack(xbase, s.u, s.v);
  };
  {
    const Matrix xbase = prob.include_x0 ? random_state() : prob.x;
    starts.push_back(physical_start(xbase, pc.m, 1.0 - pc.sigma));
    starts.push_back(physical_start(xbase, pc.L, 1.0 + pc.sigma));
    starts.push_back(physical_start(xbase, 0.5 * (pc.m + pc.L), 1.0));
    if (prob.include_x0) starts.push_back(physical_start(random_state(), pc.L, 1.0 - pc.sigma));
  }
  if (prob.static_adv) {
    const StaticAdversary& adv = *prob.static_adv;
    auto static_response = [&](const Matrix& xbase) {
      auto [su, sv] = adv.respond(xbase);
      return lay.pack(xbase, su, sv);
    };
    if (prob.include_x0) {
      // dominant orbit plane of the static closed loop, normalized to V = 1;
      // for d >= 2 the full rotating orbit is seeded as a two-column state
      std::vector<Matrix> seeds;
      for (int col = 0; col < 2; ++col) {
        if (adv.plane.col(col).norm() == 0.0) continue;
        Matrix xs = Matrix::Zero(n * nx, d);
        xs.col(0) = adv.plane.col(col);
        seeds.push_back(xs);
      }
      if (d >= 2 && adv.plane.col(1).norm() > 0.0) {
        Matrix xs = Matrix::Zero(n * nx, d);
        xs.col(0) = adv.plane.col(0);
        xs.col(1) = adv.plane.col(1);
        seeds.push_back(xs);
      }
      for (Matrix xs : seeds) {
        const double val = vcal(xs);
        if (val <= 0) continue;
        xs /= std::sqrt(val);
        starts.push_back(static_response(xs));
      }
    } else {
      starts.push_back(static_response(prob.x));
    }
  }
  if (warm && !prob.include_x0) starts.push_back(lay.pack(prob.x, warm->first, warm->second));
  const int structured = static_cast<int>(starts.size());
  for (int k = structured; k < structured + prob.restarts; ++k) {
    Vector base = starts[k % structured];
    Vector noise(lay.total());
    for (int i = 0; i < lay.total(); ++i) noise(i) = gauss(rng);
    starts.push_back(base + noise * (0.3 * base.norm() / std::sqrt(double(lay.total())) + 0.05));
  }

  auto evaluate_direct = [&](const Vector& xi) {
    AlResult res;
    res.x = xi;
    res.objective = J.eval(xi);
    res.worst_ineq = std::numeric_limits<double>::infinity();
    for (const auto& g : ineq) res.worst_ineq = std::min(res.worst_ineq, g.eval(xi));
    if (ineq.empty()) res.worst_ineq = 0.0;
    res.worst_eq = 0.0;
    for (const auto& h : eq) res.worst_eq = std::max(res.worst_eq, std::abs(h.eval(xi)));
    res.feasible = res.worst_ineq >= -1e-7 && res.worst_eq <= 1e-7;
    return res;
  };

  AlResult best;
  bool have = false;
  auto offer = [&](const AlResult& res, double tie_margin) {
    if (!res.x.allFinite() || !res.feasible) return;
    if (!have || res.objective > best.objective + tie_margin) {
      best = res;
      have = true;
    }
  };
  // structured starts stand on their own; local polish must beat them by
  // more than the certificate's own tolerance slack, which keeps
  // orbit-following starts from being displaced by myopically better but
  // non-sustainable solutions
  for (const auto& th : starts) offer(evaluate_direct(xi_of(th)), 0.0);
  const double tie = 1e-5 * (1.0 + (have ? std::abs(best.objective) : 0.0));
  for (const auto& th : starts)
    offer(augmented_lagrangian_max(J, ineq, eq, xi_of(th)), tie);
  if (!have)
    throw SolverError("greedy_step: no feasible point found (sector-consistent starts failed)");

  const Vector th = theta_of(best.x);
  GreedyStepResult out;
  out.u = lay.u_of(th);
  out.v = lay.v_of(th);
  const Matrix xs = prob.include_x0 ? lay.x_of(th) : prob.x;
  if (prob.include_x0) out.x0 = xs;
  auto s = signals_from(r, xs, out.u, out.v);
  out.y = s.y;
  out.z = s.z;
  out.x_next = s.x_next;
  out.increment = vcal(s.x_next) - rho2 * vcal(xs);
  out.min_sector = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    out.min_sector =
        std::min(out.min_sector, sector_violation(s.y.row(i), out.u.row(i), pc.m, pc.L));
  out.graph_value = graph_violation(s.z, out.v, pc.sigma, n);
  out.invariant_residual = invariant_residual(r, xs, out.u);
  RowVector vs = RowVector::Zero(d);
  for (int c = 0; c < p; ++c) {
    RowVector acc = RowVector::Zero(d);
    for (int i = 0; i < n; ++i) acc += out.v.row(i * p + c);
    vs += acc.cwiseAbs();
  }
  out.vsum_residual = vs.norm();
  return out;
}

struct WorstCaseRun {
  Trajectory trajectory;            // error coordinates; fixed point at the origin
  std::vector<double> increments;   // per-step Lyapunov increments
  std::vector<double> lyapunov;     // V^k along the run
  std::vector<GreedyStepResult> steps;
};

// Greedy trajectory: the first solve chooses x0 on the V = 1 shell, later
// solves warm-start from the previous signals.
inline WorstCaseRun worst_trajectory(const Realization& r, const ProblemClass& pc,
                                     const Certificate& cert, int n, int d, int K,
                                     unsigned seed) {
  if (K < 1) throw ConfigError("worst_trajectory: K >= 1 required");
  WorstCaseRun run;
  run.trajectory.n = n;
  run.trajectory.d = d;
  run.trajectory.has_fixed_point = false;

  GreedyStepProblem prob;
  prob.r = r;
  prob.pc = pc;
  prob.cert = cert;
  prob.n = n;
  prob.d = d;
  prob.seed = seed;
  prob.include_x0 = true;
  prob.static_adv = best_static_adversary(r, pc, n, d, seed);

  std::optional<std::pair<Matrix, Matrix>> warm;
  Matrix x;
  for (int k = 0; k < K; ++k) {
    prob.include_x0 = (k == 0);
    if (k > 0) prob.x = x;
    prob.seed = seed + 1000 * k;
    double scale = 1.0;
    if (k > 0) {
      const double v = lyapunov_value(cert, x, n);
      if (v > 0) scale = std::sqrt(v);
    }
    GreedyStepResult step = k == 0 ? greedy_step(prob, warm)
                                   : adversary_detail::greedy_step_scaled(prob, warm, scale);
    if (k == 0) x = step.x0;
    run.trajectory.x_states.push_back(x);
    run.trajectory.steps.push_back({x, step.y, step.z, step.u, step.v});
    run.lyapunov.push_back(lyapunov_value(cert, x, n));
    run.increments.push_back(step.increment);
    run.steps.push_back(step);
    x = step.x_next;
    warm = std::make_pair(step.u, step.v);
    if (lyapunov_value(cert, x, n) < 1e-20) break;  // underflow guard
  }
  run.trajectory.x_states.push_back(x);
  run.lyapunov.push_back(lyapunov_value(cert, x, n));
  return run;
}

struct LaplacianReconstruction {
  Matrix laplacian;
  double achieved_norm = 0.0;
};

// Minimum-spectral-norm Laplacian realizing one gossip step: solves
//   minimize ||I - Pi - L||  s.t.  (L (x) I) z = v,  L 1 = 0,  1'L = 0
// in closed form. Writing M = I - Pi - L, the constraints pin M on
// span{1, z-columns}; extending M by zero off that span is optimal for the
// spectral norm, so the optimum is the norm of the pinned part.
inline std::optional<LaplacianReconstruction> reconstruct_laplacian(
    const Matrix& z, const Matrix& v, int n, double /*sigma*/ = 0.0) {
  if (z.rows() != v.rows() || z.cols() != v.cols())
    throw DimensionError("reconstruct_laplacian: z/v mismatch");
  if (z.rows() % n != 0) throw DimensionError("reconstruct_laplacian: bad stacking");
  const int p = static_cast<int>(z.rows()) / n;
  const int d = static_cast<int>(z.cols());
  const Matrix pi = consensus_projector(n);

  // columns of the pinned system: M [1 | z_cols] = [0 | (I-Pi) z_col - v_col]
  Matrix zbar(n, 1 + p * d), wbar(n, 1 + p * d);
  zbar.col(0) = Vector::Ones(n);
  wbar.col(0).setZero();
  int col = 1;
  for (int c = 0; c < p; ++c)
    for (int cc = 0; cc < d; ++cc, ++col) {
      Vector zc(n), vc(n);
      for (int i = 0; i < n; ++i) {
        zc(i) = z(i * p + c, cc);
        vc(i) = v(i * p + c, cc);
      }
      if (std::abs(vc.sum()) > 1e-8 * (1.0 + vc.norm()))
        throw ConfigError("reconstruct_laplacian: 1'v != 0");
      zbar.col(col) = zc;
      wbar.col(col) = (zc - Vector::Constant(n, zc.mean())) - vc;
    }

  // any M with M zbar = wbar; least squares detects inconsistency
  Matrix mt = solve_least_squares(zbar.transpose(), wbar.transpose());
  Matrix m0 = mt.transpose();
  if ((m0 * zbar - wbar).norm() > 1e-7 * (1.0 + wbar.norm())) return std::nullopt;

  Eigen::ColPivHouseholderQR<Matrix> qr(zbar);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  Matrix qfull = qr.householderQ();
  Matrix qs = qfull.leftCols(rank);

  LaplacianReconstruction rec;
  Matrix mstar = m0 * qs * qs.transpose();
  rec.achieved_norm = spectral_norm(mstar);
  rec.laplacian = Matrix::Identity(n, n) - pi - mstar;
  return rec;
}

}  // namespace dopt
