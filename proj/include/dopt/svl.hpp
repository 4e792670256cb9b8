#pragma once

#include <array>
#include <complex>
#include <functional>

#include "dopt/certifier.hpp"

namespace dopt {

inline double svl_eta(double rho, double kappa) {
  return 1.0 + rho - kappa * (1.0 - rho);
}

// Left-hand side of the spectral-gap constraint tying (beta, rho, kappa)
// to sigma^2. Throws when evaluated at a pole, naming the factor.
inline double sigma_squared(double beta, double rho, double kappa) {
  const double eta = svl_eta(rho, kappa);
  const double d1 = beta - 1.0 + rho;
  const double d2 = 2.0 * rho * rho * beta - (1.0 - rho * rho) * eta;
  const double d3 = (1.0 + rho) * (eta - 2.0 * eta * rho + 2.0 * rho * rho) -
                    (2.0 * rho * rho + eta) * beta;
  if (d1 == 0.0) throw SingularityError("beta - 1 + rho");
  if (d2 == 0.0) throw SingularityError("2 rho^2 beta - (1 - rho^2) eta");
  if (d3 == 0.0)
    throw SingularityError("(1 + rho)(eta - 2 eta rho + 2 rho^2) - (2 rho^2 + eta) beta");
  const double n1 = beta - 1.0 + rho * rho;
  const double n2 = 2.0 - eta - 2.0 * beta;
  const double n3 = (2.0 * rho * rho + eta) * beta - (1.0 - rho * rho) * eta;
  return rho * rho * (n1 / d1) * (n2 / d2) * (n3 / d3);
}

// Coefficients (s0, s1, s2, s3) of the stationarity cubic in beta for
// d(sigma^2)/d(beta) = 0 at fixed rho.
inline std::array<double, 4> cubic_coeffs(double rho, double kappa) {
  const double eta = svl_eta(rho, kappa);
  const double r2 = rho * rho, r3 = r2 * rho, r5 = r3 * r2;
  const double om = 1.0 - r2;
  const double s0 =
      eta * om * om * (eta - (3.0 - eta) * eta * rho + 2.0 * (1.0 - eta) * r2 + 2.0 * r3);
  const double s1 = -om * (eta * eta * eta * rho + 4.0 * r5 -
                           2.0 * eta * r2 * (2.0 * r2 + rho - 3.0) +
                           eta * eta * (4.0 * r3 - 4.0 * r2 - 6.0 * rho + 3.0));
  const double s2 = 3.0 * eta * (1.0 - rho) * (1.0 - rho) * (1.0 + rho) * (2.0 * r2 + eta);
  const double s3 = (2.0 * r2 + eta) * (2.0 * r3 - eta);
  return {s0, s1, s2, s3};
}

inline double cubic_value(const std::array<double, 4>& s, double beta) {
  return s[0] + beta * (s[1] + beta * (s[2] + beta * s[3]));
}

namespace svl_detail {

// All roots of s0 + s1 x + s2 x^2 + s3 x^3 via the companion matrix,
// degrading gracefully to the quadratic/linear case.
inline std::vector<std::complex<double>> poly_roots(const std::array<double, 4>& s) {
  const double scale = std::abs(s[0]) + std::abs(s[1]) + std::abs(s[2]) + std::abs(s[3]);
  std::vector<std::complex<double>> out;
  if (scale == 0.0) return out;
  if (std::abs(s[3]) > 1e-13 * scale) {
    Matrix comp = Matrix::Zero(3, 3);
    comp(1, 0) = 1.0;
    comp(2, 1) = 1.0;
    comp(0, 2) = -s[0] / s[3];
    comp(1, 2) = -s[1] / s[3];
    comp(2, 2) = -s[2] / s[3];
    Eigen::EigenSolver<Matrix> es(comp);
    for (int i = 0; i < 3; ++i) out.push_back(es.eigenvalues()(i));
  } else if (std::abs(s[2]) > 1e-13 * scale) {
    const std::complex<double> disc(s[1] * s[1] - 4.0 * s[2] * s[0], 0.0);
    const auto sq = std::sqrt(disc);
    out.push_back((-s[1] + sq) / (2.0 * s[2]));
    out.push_back((-s[1] - sq) / (2.0 * s[2]));
  } else if (std::abs(s[1]) > 1e-13 * scale) {
    out.push_back(std::complex<double>(-s[0] / s[1], 0.0));
  }
  return out;
}

inline double region_product(double beta, double rho, double kappa) {
  return (2.0 * beta - (1.0 - rho) * (kappa + 1.0)) * (beta - 1.0 + rho * rho);
}

struct RootPick {
  double beta = 0.0;
  double product = 0.0;  // region inequality value at the root
  bool boundary = false; // root sits on the region boundary (collision)
};

}  // namespace svl_detail

// The real cubic root lying in the parameter region where the closed-form
// certificate stays sign-definite. Roots colliding on the region boundary
// are flagged via the returned product; genuinely no qualifying root is a
// design error (all roots reported).
inline svl_detail::RootPick beta_star_checked(double rho, double kappa) {
  using namespace svl_detail;
  const auto s = cubic_coeffs(rho, kappa);
  auto roots = poly_roots(s);
  RootPick best;
  bool have = false;
  int interior = 0;
  std::string all;
  for (const auto& z : roots) {
    if (std::abs(z.imag()) > 1e-8 * (1.0 + std::abs(z.real()))) continue;
    double b = z.real();
    // one Newton polish step on the cubic
    const double deriv = s[1] + b * (2.0 * s[2] + 3.0 * b * s[3]);
    if (deriv != 0.0) b -= cubic_value(s, b) / deriv;
    const double prod = region_product(b, rho, kappa);
    all += (all.empty() ? "" : ", ") + std::to_string(b);
    if (prod < -1e-9) ++interior;
    if (!have || prod < best.product) {
      best.beta = b;
      best.product = prod;
      have = true;
    }
  }
  if (!have || best.product > 1e-5)
    throw DesignError("no real cubic root satisfies the region constraint at rho=" +
                      std::to_string(rho) + " (roots: " + all + ")");
  if (interior > 1)
    throw DesignError("multiple cubic roots satisfy the region constraint at rho=" +
                      std::to_string(rho) + " (roots: " + all + ")");
  best.boundary = best.product > -1e-9;
  return best;
}

inline double beta_star(double rho, double kappa) {
  return beta_star_checked(rho, kappa).beta;
}

// Designed parameter set for the two-state template, plus the certified
// rate. sigma_eff is the spectral gap actually attained by the constraint
// at (beta, rho); it exceeds the request when the rate saturates at the
// centralized gradient bound (the flat region of the rate surface).
struct SVLDesign {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 1.0;
  double rho = 0.0;
  double eta = 0.0;
  double kappa = 1.0;
  double sigma = 0.0;      // requested spectral gap
  double sigma_eff = 0.0;  // gap satisfying the design constraint at (beta, rho)
  bool gradient_limited = false;

  Realization realization() const { return make_svl(alpha, beta, gamma, delta); }
};

namespace svl_detail {

// sigma-hat along the qualifying root branch; 0 below the gradient-rate
// floor or when no branch value exists, so the bisection moves up.
inline double branch_sigma(double rho, double kappa, double lb) {
  if (rho <= lb + 1e-14 || rho >= 1.0) return rho >= 1.0 ? 1.0 : 0.0;
  RootPick pick;
  try {
    pick = beta_star_checked(rho, kappa);
  } catch (const DesignError&) {
    return 0.0;
  }
  double rr = rho;
  if (pick.boundary) {
    // root collision: nudge off the boundary and re-select
    rr = std::min(rho + 1e-7, 1.0 - 1e-12);
    try {
      pick = beta_star_checked(rr, kappa);
    } catch (const DesignError&) {
      return 0.0;
    }
  }
  double s2;
  try {
    s2 = sigma_squared(pick.beta, rr, kappa);
  } catch (const SingularityError&) {
    return 0.0;
  }
  if (!std::isfinite(s2) || s2 > 1e6) return 0.0;
  return s2 > 0.0 ? std::sqrt(s2) : 0.0;
}

}  // namespace svl_detail

// Parameter computation: bisection on rho, solving the stationarity cubic
// for beta at each trial rate and comparing the attainable spectral gap
// with the requested one. A short secant polish then pins the constraint
// residual to roundoff. Boundary classes (kappa = 1, sigma = 0) use their
// closed forms.
inline SVLDesign design(const ProblemClass& pc0, double eps = 1e-9) {
  if (!(eps > 0)) throw ConfigError("design: eps must be positive");
  const ProblemClass pc = pc0.regularized();
  const double kappa = pc.kappa();
  const double sigma = pc.sigma;
  const double lb = (kappa - 1.0) / (kappa + 1.0);

  SVLDesign d;
  d.kappa = kappa;
  d.sigma = sigma;
  d.delta = 1.0;

  auto finish = [&](double rho, double beta) {
    d.rho = rho;
    d.beta = beta;
    d.alpha = (1.0 - rho) / pc.m;
    d.gamma = 1.0 + beta;
    d.eta = svl_eta(rho, kappa);
    try {
      const double s2 = sigma_squared(beta, rho, kappa);
      d.sigma_eff = s2 > 0 ? std::sqrt(s2) : 0.0;
    } catch (const SingularityError&) {
      d.sigma_eff = sigma;
    }
    return d;
  };

  // consensus class: template reduces to dynamic averaging, rate sigma
  if (kappa <= 1.0 + 1e-5) {
    d.rho = std::max(sigma, lb);
    d.beta = 1.0;
    d.alpha = 1.0 / pc.L;
    d.gamma = 2.0;
    d.eta = svl_eta(d.rho, kappa);
    d.sigma_eff = sigma;
    return d;
  }
  // fully mixed graph: centralized gradient descent endpoint
  if (sigma == 0.0) {
    const double rho = lb;
    d.gradient_limited = true;
    auto out = finish(rho, std::sqrt(1.0 - rho * rho));
    out.sigma_eff = 0.0;
    return out;
  }

  double r1 = 0.0, r2 = 1.0;
  while (r2 - r1 > eps) {
    const double rho = 0.5 * (r1 + r2);
    const double sh = svl_detail::branch_sigma(rho, kappa, lb);
    if (sh < sigma)
      r1 = rho;
    else
      r2 = rho;
  }
  double rho = r2;  // feasible side of the bracket

  if (rho <= lb + std::max(eps * 4.0, 1e-12)) {
    // gradient-limited: rate floors at (kappa-1)/(kappa+1)
    d.gradient_limited = true;
    rho = lb;
    return finish(rho, beta_star(std::min(rho + 1e-9, 1.0), kappa));
  }

  // secant polish of sigma-hat(rho) = sigma
  double ra = rho, rb = std::min(rho + std::max(eps, 1e-9) * 8.0, 1.0 - 1e-12);
  double fa = svl_detail::branch_sigma(ra, kappa, lb) - sigma;
  double fb = svl_detail::branch_sigma(rb, kappa, lb) - sigma;
  for (int it = 0; it < 12 && std::abs(fa) > 1e-14; ++it) {
    if (fb == fa) break;
    double rc = ra - fa * (rb - ra) / (fb - fa);
    if (!(rc > lb) || !(rc < 1.0)) break;
    const double fc = svl_detail::branch_sigma(rc, kappa, lb) - sigma;
    rb = ra;
    fb = fa;
    ra = rc;
    fa = fc;
  }
  rho = ra;
  return finish(rho, beta_star(rho, kappa));
}

// Closed-form disagreement certificate. With sigma taken from the design
// constraint, the assembled disagreement block collapses to the rank-one
// matrix -zeta zeta' / (t2 t4).
struct ClosedFormCertificate {
  std::array<double, 6> t{};  // t1..t6
  double P11 = 0.0;
  Matrix Q;
  double R = 0.0;
  Vector zeta;
  double sigma_used = 0.0;  // the gap value consistent with (beta, rho)
};

inline ClosedFormCertificate closed_form_certificate(const ProblemClass& pc0,
                                                     const SVLDesign& d) {
  const ProblemClass pc = pc0.regularized();
  const double m = pc.m, L = pc.L, kappa = pc.kappa();
  const double rho = d.rho, beta = d.beta;
  const double eta = svl_eta(rho, kappa);
  const double alpha = d.alpha;
  const double r2 = rho * rho;

  const double t1 = 2.0 * (1.0 - beta) - eta;
  const double t2 = beta - 1.0 + r2;
  const double t3 = beta * (eta + 2.0 * r2) - eta * (1.0 - r2);
  const double t4 = 2.0 * beta * r2 - eta * (1.0 - r2);
  const double t5 = (1.0 - beta - rho) *
                    (beta * (eta + 2.0 * r2) - (1.0 - r2) * (1.0 - kappa + 2.0 * kappa * rho));
  const double t6 = (2.0 - alpha * (L + m)) * (1.0 - r2) * (1.0 - r2) -
                    (2.0 * (1.0 - r2 * r2) - alpha * (L + m)) * beta;

  if (t2 == 0.0) throw SingularityError("t2 = beta - 1 + rho^2");
  if (t4 == 0.0) throw SingularityError("t4 = 2 beta rho^2 - eta (1 - rho^2)");
  if (!(t3 > 0.0)) throw DesignError("closed form: t3 <= 0, region constraint violated");
  if (!(t1 / t4 > 0.0)) throw DesignError("closed form: t1/t4 <= 0, Q not positive definite");
  if (t5 / t2 < 0.0) throw DesignError("closed form: t5/t2 < 0, R negative");
  if (!(t2 * t4 > 0.0)) throw DesignError("closed form: t2 t4 <= 0");

  ClosedFormCertificate cf;
  cf.t = {t1, t2, t3, t4, t5, t6};
  cf.P11 = m * (L - m) / (rho * (1.0 - rho));
  cf.Q.resize(2, 2);
  const double q0 = t3 / (alpha * alpha * r2);
  cf.Q << q0 * (1.0 + r2 * t1 / t4), -q0, -q0, q0;
  cf.R = t5 / (alpha * alpha * t2);
  cf.zeta.resize(4);
  cf.zeta << t6, -t2 * t3, alpha * t2 * (2.0 - alpha * (L + m)),
      beta * (t3 - alpha * r2 * (L + m));
  cf.zeta /= alpha * rho;
  const double s2 = sigma_squared(beta, rho, kappa);
  cf.sigma_used = s2 > 0 ? std::sqrt(s2) : 0.0;
  return cf;
}

// One step of the two-state iteration (per-agent rows, d columns):
//   v = L x;  y = x - delta v;  u = grad f(y);
//   x+ = x + beta w - alpha u - gamma v;  w+ = w - v.
struct SvlState {
  Matrix x;  // n x d
  Matrix w;  // n x d
};

inline void svl_step(SvlState& st, const Matrix& laplacian,
                     const std::function<RowVector(int, const RowVector&)>& grad,
                     const SVLDesign& d) {
  const int n = static_cast<int>(st.x.rows());
  if (laplacian.rows() != n || laplacian.cols() != n)
    throw DimensionError("svl_step: laplacian size mismatch");
  Matrix v = laplacian * st.x;
  Matrix y = st.x - d.delta * v;
  Matrix u(st.x.rows(), st.x.cols());
  for (int i = 0; i < n; ++i) u.row(i) = grad(i, y.row(i));
  st.x += d.beta * st.w - d.alpha * u - d.gamma * v;
  st.w -= v;
}

// Runs the template and the inexact-ADMM recursion (single gradient step,
// single gossip round, ADMM parameter beta/alpha) from matched states and
// returns the largest deviation across K iterations. The mapping
// w^k = -(alpha/beta) z^{k-1} makes the two iterations coincide exactly
// when gamma = 1 + beta and delta = 1.
inline double admm_equivalence_check(const SVLDesign& d, unsigned seed, int K = 50,
                                     int n = 3, int dim = 1) {
  if (d.beta == 0.0) throw ConfigError("admm equivalence: beta must be nonzero");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  // random quadratic slopes in [0.5, 2] and shifted minima
  std::vector<double> slope(n);
  Matrix target(n, dim);
  for (int i = 0; i < n; ++i) {
    slope[i] = 0.5 + 1.5 * std::abs(unif(rng));
    for (int j = 0; j < dim; ++j) target(i, j) = unif(rng);
  }
  auto grad = [&](int i, const RowVector& y) -> RowVector {
    return slope[i] * (y - target.row(i));
  };

  SvlState svl;
  svl.x.resize(n, dim);
  svl.w.resize(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) svl.x(i, j) = unif(rng);
  for (int i = 0; i < n - 1; ++i)
    for (int j = 0; j < dim; ++j) svl.w(i, j) = 0.3 * unif(rng);
  svl.w.row(n - 1) = -svl.w.topRows(n - 1).colwise().sum();

  // ADMM state: x matches, z^{-1} = -(beta/alpha) w^0
  Matrix ax = svl.x;
  Matrix az = -(d.beta / d.alpha) * svl.w;
  const double beta_admm = d.beta / d.alpha;

  double dev = 0.0;
  for (int k = 0; k < K; ++k) {
    Matrix lap = consensus_projector(n);
    lap = Matrix::Identity(n, n) - lap;  // I - Pi
    {
      // random admissible gossip matrix with gap 0.5
      std::mt19937_64 lrng(seed + 1000 + k);
      lap = lap - ones_complement_basis(n) *
                      (Vector::NullaryExpr(n - 1, [&](Eigen::Index) {
                         return 0.5 * unif(lrng);
                       })).asDiagonal() *
                      ones_complement_basis(n).transpose();
    }

    svl_step(svl, lap, grad, d);

    Matrix v = lap * ax;
    Matrix y = ax - v;
    Matrix u(n, dim);
    for (int i = 0; i < n; ++i) u.row(i) = grad(i, y.row(i));
    az += beta_admm * v;                   // z^k = z^{k-1} + beta_admm (x - y)
    ax = y - d.alpha * (u + az);           // x^{k+1}

    dev = std::max(dev, (svl.x - ax).cwiseAbs().maxCoeff());
    dev = std::max(dev, (svl.w + (d.alpha / d.beta) * az).cwiseAbs().maxCoeff());
  }
  return dev;
}

}  // namespace dopt
