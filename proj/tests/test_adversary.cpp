#include <catch2/catch_amalgamated.hpp>

#include "dopt/adversary.hpp"
#include "dopt/svl.hpp"

using namespace dopt;

TEST_CASE("sector form boundary, interior, and violation") {
  RowVector y(2), u(2);
  y << 1.0, -0.5;
  const double m = 1.0, L = 10.0;

  u = m * y;
  CHECK(sector_violation(y, u, m, L) == Catch::Approx(0.0).margin(1e-14));

  u = 0.5 * (m + L) * y;
  CHECK(sector_violation(y, u, m, L) ==
        Catch::Approx(0.5 * (L - m) * (L - m) * y.squaredNorm()).epsilon(1e-12));

  u = 2.0 * L * y;
  CHECK(sector_violation(y, u, m, L) < 0.0);
}

TEST_CASE("graph form on consensus and gossip signals") {
  const int n = 4, p = 1, d = 2;
  std::mt19937_64 rng(8);

  // consensus direction is annihilated
  Matrix z = Matrix::Zero(n * p, d);
  for (int i = 0; i < n; ++i) z.row(i) << 1.7, -0.4;
  CHECK(graph_violation(z, Matrix::Zero(n * p, d), 0.5, n) ==
        Catch::Approx(0.0).margin(1e-12));

  // v = (L (x) I) z for any admissible Laplacian is feasible
  for (double sigma : {0.2, 0.6, 0.9}) {
    for (int trial = 0; trial < 10; ++trial) {
      Matrix zz = Matrix::Random(n * p, d);
      Matrix lap = random_laplacian(n, sigma, rng);
      Matrix vv = kron(lap, Matrix::Identity(p, p)) * zz;
      CHECK(graph_violation(zz, vv, sigma, n) >= -1e-9);
    }
  }

  // overdriven disagreement violates the form: the feasible gossip gains on
  // the disagreement subspace fill [1 - sigma, 1 + sigma]
  Matrix zz = Matrix::Random(n * p, d);
  Matrix pz = zz;
  RowVector mean = RowVector::Zero(d);
  for (int i = 0; i < n; ++i) mean += zz.row(i);
  mean /= n;
  for (int i = 0; i < n; ++i) pz.row(i) -= mean;
  for (double sigma : {0.2, 0.5, 0.9}) {
    CHECK(graph_violation(zz, (1.0 + 2.0 * sigma) * pz, sigma, n) < 0.0);
    if (sigma < 1.0 / 3.0)  // 2 sigma only leaves the band below sigma = 1/3
      CHECK(graph_violation(zz, 2.0 * sigma * pz, sigma, n) < 0.0);
  }
}

namespace {

struct Setup {
  Realization r;
  ProblemClass pc;
  Certificate cert;
};

Setup certified_svl(double kappa, double sigma) {
  ProblemClass pc = ProblemClass::from_kappa(kappa, sigma);
  SVLDesign d = design(pc);
  CertifyResult res = certify_rate(d.realization(), pc, 1e-4);
  REQUIRE(res.certifiable);
  return {d.realization(), pc, res.cert};
}

}  // namespace

TEST_CASE("greedy step at the fixed point is inert") {
  Setup s = certified_svl(10, 0.5);
  GreedyStepProblem prob;
  prob.r = s.r;
  prob.pc = s.pc;
  prob.cert = s.cert;
  prob.n = 2;
  prob.d = 1;
  prob.x = Matrix::Zero(2 * 2, 1);
  prob.seed = 5;
  GreedyStepResult res = greedy_step(prob);
  CHECK(res.increment <= 1e-9);
  CHECK(res.increment >= -1e-9);
  CHECK(res.u.norm() < 1e-4);
  CHECK(res.v.norm() < 1e-4);
}

TEST_CASE("greedy step saturates the certificate") {
  Setup s = certified_svl(10, 0.5);
  GreedyStepProblem prob;
  prob.r = s.r;
  prob.pc = s.pc;
  prob.cert = s.cert;
  prob.n = 2;
  prob.d = 1;
  prob.seed = 17;
  prob.include_x0 = true;
  GreedyStepResult res = greedy_step(prob);
  const double v0 = lyapunov_value(s.cert, res.x0, 2);
  CHECK(v0 == Catch::Approx(1.0).margin(1e-6));
  CHECK(res.increment <= 1e-9);
  // at the bisection boundary the bound is numerically tight
  CHECK(res.increment >= -0.05);
  CHECK(res.min_sector >= -1e-7);
  CHECK(res.graph_value >= -1e-7);
  CHECK(res.vsum_residual <= 1e-8);

  // slack appears when the rate is loosened
  GreedyStepProblem loose = prob;
  loose.cert.rho = s.cert.rho + 0.05;
  GreedyStepResult res2 = greedy_step(loose);
  CHECK(res2.increment < -0.01);
}

TEST_CASE("worst-case trajectory tracks the certified envelope") {
  Setup s = certified_svl(10, 0.5);
  WorstCaseRun run = worst_trajectory(s.r, s.pc, s.cert, 2, 1, 61, 3);
  REQUIRE(run.lyapunov.size() >= 40);
  const double rho2 = s.cert.rho * s.cert.rho;
  for (size_t k = 0; k + 1 < run.lyapunov.size(); ++k) {
    CHECK(run.increments[k] <= 1e-9);
    CHECK(run.lyapunov[k] <= std::pow(rho2, double(k)) * (1.0 + 1e-6));
  }
  const double rate = empirical_rate(run.trajectory.x_err_norms(), 20);
  CHECK(rate >= s.cert.rho - 0.02);
  CHECK(rate <= s.cert.rho + 5e-3);
}

TEST_CASE("laplacian reconstruction: consensus signals cost nothing") {
  const int n = 5, p = 1, d = 1;
  Matrix z(n * p, d);
  for (int i = 0; i < n; ++i) z(i, 0) = 2.3;
  Matrix v = Matrix::Zero(n * p, d);
  auto rec = reconstruct_laplacian(z, v, n);
  REQUIRE(rec.has_value());
  CHECK(rec->achieved_norm < 1e-12);
  Matrix pi = consensus_projector(n);
  CHECK((rec->laplacian - (Matrix::Identity(n, n) - pi)).norm() < 1e-10);
}

TEST_CASE("laplacian reconstruction recovers admissible gossip") {
  std::mt19937_64 rng(21);
  for (double sigma0 : {0.3, 0.6, 0.9}) {
    for (int trial = 0; trial < 5; ++trial) {
      const int n = 6, p = 1, d = 1;
      Matrix z = Matrix::Random(n * p, d);
      Matrix lap0 = random_laplacian(n, sigma0, rng);
      Matrix v = kron(lap0, Matrix::Identity(p, p)) * z;
      auto rec = reconstruct_laplacian(z, v, n);
      REQUIRE(rec.has_value());
      CHECK(rec->achieved_norm <= sigma0 + 1e-6);
      // reconstructed matrix reproduces the gossip step and is balanced
      CHECK((kron(rec->laplacian, Matrix::Identity(p, p)) * z - v).norm() < 1e-8);
      CHECK((rec->laplacian * Vector::Ones(n)).norm() < 1e-10);
      CHECK((Vector::Ones(n).transpose() * rec->laplacian).norm() < 1e-10);
      Matrix pi = consensus_projector(n);
      CHECK(spectral_norm(Matrix::Identity(n, n) - pi - rec->laplacian) <=
            rec->achieved_norm + 1e-10);
    }
  }
}

TEST_CASE("laplacian reconstruction optimum matches the epigraph program") {
  // dual route: compare the closed-form completion against the semidefinite
  // epigraph formulation min t s.t. [tI M; M' tI] PSD over the constrained M
  const int n = 4, p = 1, d = 1;
  std::mt19937_64 rng(77);
  Matrix z = Matrix::Random(n * p, d);
  Matrix lap0 = random_laplacian(n, 0.7, rng);
  Matrix v = kron(lap0, Matrix::Identity(p, p)) * z;
  auto rec = reconstruct_laplacian(z, v, n);
  REQUIRE(rec.has_value());

  // parameterize M = M_p + sum_i xi_i N_i on the affine constraint set
  Matrix pi = consensus_projector(n);
  Matrix zbar(n, 2), wbar(n, 2);
  zbar.col(0).setOnes();
  wbar.col(0).setZero();
  zbar.col(1) = z.col(0);
  wbar.col(1) = (Matrix::Identity(n, n) - pi) * z.col(0) - v.col(0);
  // constraints: M zbar = wbar and 1'M = 0, rows stacked over vec(M)
  const int nv = n * n;
  Matrix cons(2 * n + n, nv);
  Vector rhs(2 * n + n);
  cons.setZero();
  int row = 0;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < n; ++i, ++row) {
      for (int j = 0; j < n; ++j) cons(row, i * n + j) = zbar(j, c);
      rhs(row) = wbar(i, c);
    }
  for (int j = 0; j < n; ++j, ++row) {
    for (int i = 0; i < n; ++i) cons(row, i * n + j) = 1.0;
    rhs(row) = 0.0;
  }
  Matrix basis = nullspace_basis(cons);
  Vector mp = solve_least_squares(cons, Matrix(rhs)).col(0);
  REQUIRE((cons * mp - rhs).norm() < 1e-9);

  SdpProblem prob;
  const int nxi = static_cast<int>(basis.cols());
  prob.num_vars = nxi + 1;
  prob.objective = Vector::Zero(nxi + 1);
  prob.objective(nxi) = -1.0;  // minimize t
  SdpBlock blk;
  auto embed = [&](const Vector& mvec) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = mvec(i * n + j);
    Matrix big = Matrix::Zero(2 * n, 2 * n);
    big.topRightCorner(n, n) = m;
    big.bottomLeftCorner(n, n) = m.transpose();
    return big;
  };
  blk.constant = embed(mp);
  for (int i = 0; i < nxi; ++i) blk.terms.push_back({i, embed(basis.col(i))});
  blk.terms.push_back({nxi, Matrix::Identity(2 * n, 2 * n)});
  prob.blocks.push_back(blk);

  Vector y0 = Vector::Zero(nxi + 1);
  y0(nxi) = spectral_norm(embed(mp)) + 1.0;
  LogBarrierSolver solver;
  SdpResult sol = solver.maximize(prob, y0);
  REQUIRE(sol.converged);
  CHECK(sol.y(nxi) == Catch::Approx(rec->achieved_norm).margin(1e-5));
}

TEST_CASE("reconstruction rejects unbalanced gossip") {
  const int n = 3;
  Matrix z = Matrix::Random(n, 1);
  Matrix v = Matrix::Ones(n, 1);  // 1'v != 0
  CHECK_THROWS_AS(reconstruct_laplacian(z, v, n), ConfigError);
}
