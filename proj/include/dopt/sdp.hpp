#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "dopt/linalg.hpp"

namespace dopt {

// Dual-form semidefinite program with several PSD blocks:
//
//   maximize  objective . y
//   such that constant_j + sum_i y_i * term_j(i)  is PSD,  for each block j.
//
// Terms are stored sparsely in the variable index since most variables touch
// only a few blocks.
struct SdpBlock {
  Matrix constant;
  std::vector<std::pair<int, Matrix>> terms;  // (variable index, coefficient)

  Matrix eval(const Vector& y) const {
    Matrix m = constant;
    for (const auto& [idx, coef] : terms) m.noalias() += y(idx) * coef;
    return m;
  }
};

struct SdpProblem {
  int num_vars = 0;
  Vector objective;
  std::vector<SdpBlock> blocks;
};

struct SdpResult {
  Vector y;
  double objective = 0.0;
  int newton_iterations = 0;
  bool converged = false;
};

struct SdpOptions {
  double mu_initial = 10.0;
  double mu_factor = 0.2;
  double mu_min = 1e-10;
  double centering_tol = 1e-11;  // half squared Newton decrement
  int max_newton_per_stage = 60;
};

// Interface for the semidefinite feasibility oracle. Any conforming solver
// may be substituted behind it.
class FeasibilityOracle {
 public:
  virtual ~FeasibilityOracle() = default;
  // y0 must be strictly feasible (all blocks positive definite).
  virtual SdpResult maximize(const SdpProblem& prob, const Vector& y0) const = 0;
};

// Log-barrier path-following method. Minimizes
//   -objective.y / mu - sum_j logdet(block_j(y))
// by damped Newton steps, shrinking mu geometrically. Suited to the small
// dense problems this toolkit generates (block sizes <= ~10, <= ~30 vars).
class LogBarrierSolver final : public FeasibilityOracle {
 public:
  explicit LogBarrierSolver(SdpOptions opts = {}) : opts_(opts) {}

  SdpResult maximize(const SdpProblem& prob, const Vector& y0) const override {
    const int m = prob.num_vars;
    SdpResult res;
    res.y = y0;
    if (!strictly_feasible(prob, y0)) throw SolverError("sdp: initial point not strictly feasible");

    Vector y = y0;
    double mu = opts_.mu_initial;
    int total_newton = 0;
    bool healthy = true;

    while (mu > opts_.mu_min) {
      for (int it = 0; it < opts_.max_newton_per_stage; ++it) {
        ++total_newton;
        Vector grad;
        Matrix hess;
        double phi = barrier_value_grad_hess(prob, y, mu, &grad, &hess);
        if (!std::isfinite(phi) || !grad.allFinite() || !hess.allFinite()) {
          healthy = false;
          break;
        }
        // regularized Newton direction
        double reg = 1e-13 * (hess.trace() / m + 1.0);
        Vector dy;
        for (int attempt = 0; attempt < 12; ++attempt) {
          Eigen::LLT<Matrix> llt(hess + reg * Matrix::Identity(m, m));
          if (llt.info() == Eigen::Success) {
            dy = llt.solve(-grad);
            break;
          }
          reg *= 100.0;
        }
        if (dy.size() == 0) {
          healthy = false;
          break;
        }
        const double decrement2 = -grad.dot(dy);
        if (decrement2 <= 0) break;  // at the analytic center up to rounding

        // keep strictly inside the cone, then backtrack on the barrier value
        double step = 1.0;
        while (step > 1e-16 && !strictly_feasible(prob, y + step * dy)) step *= 0.5;
        if (step < 1.0) step *= 0.9;
        bool accepted = false;
        for (int ls = 0; ls < 60 && step > 1e-16; ++ls) {
          Vector cand = y + step * dy;
          if (strictly_feasible(prob, cand)) {
            const double phic = barrier_value(prob, cand, mu);
            if (phic <= phi - 0.25 * step * decrement2 + 1e-13 * (1.0 + std::abs(phi))) {
              y = cand;
              accepted = true;
              break;
            }
          }
          step *= 0.5;
        }
        if (!accepted) break;
        if (0.5 * decrement2 < opts_.centering_tol) break;
      }
      if (!healthy) break;
      mu *= opts_.mu_factor;
    }

    res.y = y;
    res.objective = prob.objective.dot(y);
    res.newton_iterations = total_newton;
    res.converged = healthy;
    return res;
  }

 private:
  SdpOptions opts_;

  static bool strictly_feasible(const SdpProblem& prob, const Vector& y) {
    for (const auto& blk : prob.blocks) {
      Eigen::LLT<Matrix> llt(blk.eval(y));
      if (llt.info() != Eigen::Success) return false;
    }
    return true;
  }

  static double barrier_value(const SdpProblem& prob, const Vector& y, double mu) {
    double phi = -prob.objective.dot(y) / mu;
    for (const auto& blk : prob.blocks) {
      Eigen::LLT<Matrix> llt(blk.eval(y));
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      phi -= 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    }
    return phi;
  }

  static double barrier_value_grad_hess(const SdpProblem& prob, const Vector& y,
                                        double mu, Vector* grad, Matrix* hess) {
    const int m = prob.num_vars;
    *grad = -prob.objective / mu;
    *hess = Matrix::Zero(m, m);
    double phi = -prob.objective.dot(y) / mu;
    for (const auto& blk : prob.blocks) {
      Matrix f = blk.eval(y);
      Eigen::LLT<Matrix> llt(f);
      if (llt.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
      phi -= 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
      Matrix finv = llt.solve(Matrix::Identity(f.rows(), f.rows()));
      const int nterms = static_cast<int>(blk.terms.size());
      std::vector<Matrix> finv_t(nterms);
      for (int a = 0; a < nterms; ++a) {
        finv_t[a].noalias() = finv * blk.terms[a].second;
        (*grad)(blk.terms[a].first) -= finv_t[a].trace();
      }
      for (int a = 0; a < nterms; ++a) {
        const int ia = blk.terms[a].first;
        for (int b = a; b < nterms; ++b) {
          const int ib = blk.terms[b].first;
          const double v = finv_t[a].cwiseProduct(finv_t[b].transpose()).sum();
          (*hess)(ia, ib) += v;
          if (ia != ib) (*hess)(ib, ia) += v;
        }
      }
    }
    return phi;
  }
};

}  // namespace dopt
