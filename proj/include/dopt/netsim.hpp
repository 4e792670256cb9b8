#pragma once

#include <random>
#include <vector>

#include "dopt/realization.hpp"

namespace dopt {

// Quadratic local objective f_i(y) = 0.5 (y - r)' H (y - r) with Hessian
// spectrum inside the sector [m, L].
struct QuadraticLocalFunction {
  Matrix H;  // d x d symmetric
  Vector r;  // minimizer

  RowVector gradient(const RowVector& y) const {
    return (y - r.transpose()) * H;
  }
};

inline QuadraticLocalFunction random_quadratic(int d, double m, double L,
                                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  QuadraticLocalFunction f;
  Vector eigs(d);
  // endpoints included so the sector is exercised at its boundary
  for (int i = 0; i < d; ++i) eigs(i) = m + (L - m) * unif(rng);
  if (d >= 1) eigs(0) = unif(rng) < 0.5 ? m : L;
  Matrix o = d == 1 ? Matrix::Identity(1, 1) : random_orthogonal(d, rng);
  f.H = o * eigs.asDiagonal() * o.transpose();
  f.H = 0.5 * (f.H + f.H.transpose());
  f.r.resize(d);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < d; ++i) f.r(i) = gauss(rng);
  return f;
}

// Minimizer of the average of quadratics and the per-agent gradients there.
struct QuadraticOptimum {
  RowVector y_opt;
  Matrix gradients;  // n x d, rows sum to zero
};

inline QuadraticOptimum quadratic_optimum(const std::vector<QuadraticLocalFunction>& fs) {
  const int n = static_cast<int>(fs.size());
  const int d = static_cast<int>(fs[0].H.rows());
  Matrix hsum = Matrix::Zero(d, d);
  Vector hr = Vector::Zero(d);
  for (const auto& f : fs) {
    hsum += f.H;
    hr += f.H * f.r;
  }
  QuadraticOptimum opt;
  opt.y_opt = hsum.ldlt().solve(hr).transpose();
  opt.gradients.resize(n, d);
  for (int i = 0; i < n; ++i) opt.gradients.row(i) = fs[i].gradient(opt.y_opt);
  return opt;
}

// Symmetric Laplacian with ||I - Pi - L|| <= sigma by construction:
// L = (I - Pi) - U D U' with U an orthonormal basis of the complement of
// the consensus direction and D diagonal, |D| <= sigma.
inline Matrix random_laplacian(int n, double sigma, std::mt19937_64& rng) {
  if (n < 2) throw DimensionError("random_laplacian: n >= 2 required");
  const Matrix pi = consensus_projector(n);
  Matrix u = ones_complement_basis(n);
  if (n > 2) u = u * random_orthogonal(n - 1, rng);
  std::uniform_real_distribution<double> unif(-sigma, sigma);
  Vector dvals(n - 1);
  for (int i = 0; i < n - 1; ++i) dvals(i) = sigma == 0.0 ? 0.0 : unif(rng);
  return (Matrix::Identity(n, n) - pi) - u * dvals.asDiagonal() * u.transpose();
}

struct LaplacianSequence {
  std::vector<Matrix> matrices;
  double sigma_bound = 0.0;

  const Matrix& at(int k) const { return matrices[k % matrices.size()]; }
};

inline LaplacianSequence random_laplacian_sequence(int n, double sigma, int K,
                                                   unsigned seed,
                                                   bool constant_graph = false) {
  std::mt19937_64 rng(seed);
  LaplacianSequence seq;
  seq.sigma_bound = sigma;
  const int count = constant_graph ? 1 : K;
  seq.matrices.reserve(count);
  for (int k = 0; k < count; ++k) seq.matrices.push_back(random_laplacian(n, sigma, rng));
  return seq;
}

// Per-iteration record of every signal, stacked agent-major.
struct TrajectoryStep {
  Matrix x;  // (n*n_x) x d
  Matrix y;  // n x d
  Matrix z;  // (n*p) x d
  Matrix u;  // n x d
  Matrix v;  // (n*p) x d
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;  // signals at k = 0..K-1; x also at K
  std::vector<Matrix> x_states;       // length K+1
  int n = 0, d = 1;
  FixedPoint fixed_point;
  bool has_fixed_point = false;

  // stacked state error at step k
  Matrix x_err(int k) const {
    return has_fixed_point ? Matrix(x_states[k] - fixed_point.x) : x_states[k];
  }
  std::vector<double> x_err_norms() const {
    std::vector<double> out;
    out.reserve(x_states.size());
    for (size_t k = 0; k < x_states.size(); ++k)
      out.push_back(x_err(static_cast<int>(k)).norm());
    return out;
  }
};

namespace netsim_detail {

// One synchronous round: resolves y/u/z/v in dependency order, then the
// state update. x is (n*n_x) x d agent-major.
struct RoundSignals {
  Matrix y, u, z, v;
};

inline RoundSignals evaluate_round(
    const Realization& r, const Matrix& x, const Matrix& lap,
    const std::function<RowVector(int, const RowVector&)>& grad,
    const std::vector<int>& order) {
  const int nx = r.n_states(), p = r.n_comm();
  const int n = static_cast<int>(lap.rows());
  const int d = static_cast<int>(x.cols());
  RoundSignals s;
  s.y.setZero(n, d);
  s.u.setZero(n, d);
  s.z.setZero(n * p, d);
  s.v.setZero(n * p, d);

  auto agent_x = [&](int i) { return x.middleRows(i * nx, nx); };
  for (int node : order) {
    if (node == 0) {
      for (int i = 0; i < n; ++i) {
        RowVector yi = r.C_y * agent_x(i);
        for (int c = 0; c < p; ++c)
          if (r.D_yv(0, c) != 0.0) yi += r.D_yv(0, c) * s.v.row(i * p + c);
        s.y.row(i) = yi;
        s.u.row(i) = grad(i, yi);
      }
    } else {
      const int c = node - 1;
      for (int i = 0; i < n; ++i) {
        RowVector zc = r.C_z.row(c) * agent_x(i);
        if (r.D_zu(c, 0) != 0.0) zc += r.D_zu(c, 0) * s.u.row(i);
        for (int j = 0; j < p; ++j)
          if (r.D_zv(c, j) != 0.0) zc += r.D_zv(c, j) * s.v.row(i * p + j);
        s.z.row(i * p + c) = zc;
      }
      // gossip on communicated component c
      for (int dcol = 0; dcol < d; ++dcol) {
        Vector zc(n);
        for (int i = 0; i < n; ++i) zc(i) = s.z(i * p + c, dcol);
        Vector vc = lap * zc;
        for (int i = 0; i < n; ++i) s.v(i * p + c, dcol) = vc(i);
      }
    }
  }
  return s;
}

inline Matrix state_update(const Realization& r, const Matrix& x,
                           const RoundSignals& s) {
  const int nx = r.n_states(), p = r.n_comm();
  const int n = static_cast<int>(s.y.rows());
  Matrix xn(x.rows(), x.cols());
  for (int i = 0; i < n; ++i) {
    xn.middleRows(i * nx, nx) = r.A * x.middleRows(i * nx, nx) +
                                r.B_u * s.u.row(i) +
                                r.B_v * s.v.middleRows(i * p, p);
  }
  return xn;
}

}  // namespace netsim_detail

// Residual of the network invariant sum_j (F_x x_j + F_u u_j) = 0.
inline double invariant_residual(const Realization& r, const Matrix& x,
                                 const Matrix& u) {
  if (r.n_invariants() == 0) return 0.0;
  const int nx = r.n_states();
  const int n = static_cast<int>(u.rows());
  Matrix acc = Matrix::Zero(r.n_invariants(), x.cols());
  for (int i = 0; i < n; ++i)
    acc += r.F_x * x.middleRows(i * nx, nx) + r.F_u * u.row(i);
  return acc.norm();
}

// Canonical initialization satisfying each catalog algorithm's invariant:
// EXTRA/NIDS fold the first iterate into the state, gradient trackers start
// their tracker at the local gradient, the two-state template starts w = 0.
inline Matrix canonical_initialization(const Realization& r,
                                       const std::vector<QuadraticLocalFunction>& fs,
                                       const Matrix& x0_agents,  // n x d
                                       const Matrix& lap0) {
  const int n = static_cast<int>(x0_agents.rows());
  const int d = static_cast<int>(x0_agents.cols());
  const int nx = r.n_states();
  Matrix x = Matrix::Zero(n * nx, d);
  Matrix g0(n, d);
  for (int i = 0; i < n; ++i) g0.row(i) = fs[i].gradient(x0_agents.row(i));

  if (r.name == "EXTRA" || r.name == "NIDS") {
    const double alpha = -r.B_u(0, 0);
    const double mu = -r.B_v(0, 0);
    Matrix x1 = x0_agents - alpha * g0;
    if (r.name == "EXTRA") x1 -= mu * (lap0 * x0_agents);
    for (int i = 0; i < n; ++i) {
      x.row(i * nx + 0) = x1.row(i);
      x.row(i * nx + 1) = x0_agents.row(i);
      x.row(i * nx + 2) = g0.row(i);
    }
  } else if (r.name == "DIGing" || r.name == "AugDGM") {
    for (int i = 0; i < n; ++i) {
      x.row(i * nx + 0) = x0_agents.row(i);
      x.row(i * nx + 1) = g0.row(i);  // tracker s0 = grad f(x0)
      x.row(i * nx + 2) = g0.row(i);
    }
  } else if (r.name == "ExDiff") {
    for (int i = 0; i < n; ++i) {
      x.row(i * nx + 0) = x0_agents.row(i);
      x.row(i * nx + 1) = x0_agents.row(i);
    }
  } else if (r.name == "SVL" || r.name == "uDIG" || r.name == "uEXTRA") {
    for (int i = 0; i < n; ++i) x.row(i * nx + 0) = x0_agents.row(i);
    // second state starts at zero: sums to zero across the network
  } else {
    throw ConfigError("canonical_initialization: no rule for '" + r.name + "'");
  }
  return x;
}

// Synchronous simulation of the realization for K rounds.
inline Trajectory run(const Realization& r,
                      const std::vector<QuadraticLocalFunction>& fs,
                      const LaplacianSequence& laps, int K, const Matrix& init) {
  r.validate();
  const auto order = evaluation_order(r);  // throws when not implementable
  const int nx = r.n_states();
  const int n = static_cast<int>(laps.matrices.front().rows());
  if (static_cast<int>(fs.size()) != n)
    throw ConfigError("run: one local function per agent required");
  if (init.rows() != static_cast<Eigen::Index>(n) * nx)
    throw DimensionError("run: init has wrong number of rows");
  const int d = static_cast<int>(init.cols());

  auto grad = [&](int i, const RowVector& y) { return fs[i].gradient(y); };

  Trajectory traj;
  traj.n = n;
  traj.d = d;
  {
    auto w = check_fixed_point(r);
    if (w) {
      auto opt = quadratic_optimum(fs);
      traj.fixed_point = construct_fixed_point(r, *w, opt.gradients, opt.y_opt);
      traj.has_fixed_point = true;
    }
  }

  Matrix x = init;
  traj.x_states.push_back(x);
  for (int k = 0; k < K; ++k) {
    auto s = netsim_detail::evaluate_round(r, x, laps.at(k), grad, order);
    if (k == 0) {
      const double resid = invariant_residual(r, x, s.u);
      if (resid > 1e-8 * std::max(1.0, x.norm()))
        throw ConfigError("run: initialization violates the network invariant (residual " +
                          std::to_string(resid) + ")");
    }
    traj.steps.push_back({x, s.y, s.z, s.u, s.v});
    x = netsim_detail::state_update(r, x, s);
    traj.x_states.push_back(x);
  }
  return traj;
}

// Least-squares slope of log(err) against iteration index on
// [burn_in, end); entries below 1e-13 are dropped.
inline double empirical_rate(const std::vector<double>& err_norms, int burn_in) {
  std::vector<std::pair<int, double>> pts;
  for (int k = burn_in; k < static_cast<int>(err_norms.size()); ++k) {
    if (err_norms[k] < 1e-13) break;
    pts.push_back({k, std::log(err_norms[k])});
  }
  if (pts.size() < 5)
    throw SolverError("empirical_rate: fewer than 5 usable points");
  double sk = 0, sv = 0, skk = 0, skv = 0;
  for (auto [k, v] : pts) {
    sk += k;
    sv += v;
    skk += double(k) * k;
    skv += k * v;
  }
  const double nn = static_cast<double>(pts.size());
  const double slope = (nn * skv - sk * sv) / (nn * skk - sk * sk);
  return std::exp(slope);
}

inline double lower_bound(double kappa, double sigma) {
  if (kappa < 1 || sigma < 0 || sigma >= 1)
    throw ConfigError("lower_bound: kappa >= 1 and sigma in [0,1) required");
  return std::max((kappa - 1.0) / (kappa + 1.0), sigma);
}

}  // namespace dopt
