#pragma once

#include <algorithm>
#include <functional>
#include <future>
#include <thread>

#include "dopt/svl.hpp"

namespace dopt {

// Rate 2.0 marks "uncertifiable" so derivative-free searches move away
// from divergent parameter regions smoothly.
constexpr double kUncertifiableRate = 2.0;

struct TunePoint {
  double alpha = 0.0;
  double mu = 1.0;
  double rho = kUncertifiableRate;
  bool certifiable = false;
};

namespace tuner_detail {

// Brent-style scalar minimization (golden section with parabolic steps).
inline std::pair<double, double> brent_minimize(
    const std::function<double(double)>& f, double a, double b, double rel_tol,
    int max_iter = 120) {
  const double gold = 0.3819660112501051;
  double x = a + gold * (b - a), w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const double xm = 0.5 * (a + b);
    const double tol1 = rel_tol * std::abs(x) + 1e-12;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool parabolic = false;
    if (std::abs(e) > tol1) {
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0) p = -p;
      q = std::abs(q);
      if (std::abs(p) < std::abs(0.5 * q * e) && p > q * (a - x) && p < q * (b - x)) {
        e = d;
        d = p / q;
        parabolic = true;
      }
    }
    if (!parabolic) {
      e = (x < xm) ? b - x : a - x;
      d = gold * e;
    }
    const double u = (std::abs(d) >= tol1) ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u < x)
        b = x;
      else
        a = x;
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x)
        a = u;
      else
        b = u;
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return {x, fx};
}

struct NmResult {
  Vector x;
  double f = 0.0;
};

// Nelder-Mead simplex descent; terminates on simplex diameter.
inline NmResult nelder_mead(const std::function<double(const Vector&)>& f,
                            std::vector<Vector> simplex, double diam_tol,
                            int max_iter = 400) {
  const int n = static_cast<int>(simplex[0].size());
  if (static_cast<int>(simplex.size()) != n + 1)
    throw ConfigError("nelder_mead: simplex must have n+1 vertices");
  {
    double diam = 0.0;
    for (size_t i = 0; i < simplex.size(); ++i)
      for (size_t j = i + 1; j < simplex.size(); ++j)
        diam = std::max(diam, (simplex[i] - simplex[j]).norm());
    if (diam == 0.0) throw ConfigError("nelder_mead: degenerate initial simplex");
  }
  std::vector<double> fv(n + 1);
  for (int i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

  for (int it = 0; it < max_iter; ++it) {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Vector> sx(n + 1);
    std::vector<double> sf(n + 1);
    for (int i = 0; i <= n; ++i) {
      sx[i] = simplex[idx[i]];
      sf[i] = fv[idx[i]];
    }
    simplex = sx;
    fv = sf;

    double diam = 0.0;
    for (int i = 1; i <= n; ++i) diam = std::max(diam, (simplex[i] - simplex[0]).norm());
    if (diam < diam_tol) break;

    Vector centroid = Vector::Zero(n);
    for (int i = 0; i < n; ++i) centroid += simplex[i];
    centroid /= n;

    const Vector xr = centroid + (centroid - simplex[n]);
    const double fr = f(xr);
    if (fr < fv[0]) {
      const Vector xe = centroid + 2.0 * (centroid - simplex[n]);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[n] = xe;
        fv[n] = fe;
      } else {
        simplex[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      simplex[n] = xr;
      fv[n] = fr;
    } else {
      const Vector xc = centroid + 0.5 * (simplex[n] - centroid);
      const double fc = f(xc);
      if (fc < fv[n]) {
        simplex[n] = xc;
        fv[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
          fv[i] = f(simplex[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  return {simplex[best], fv[best]};
}

}  // namespace tuner_detail

// Family = catalog name with mu/sector bounds filled per problem class.
inline Realization family_instance(const std::string& family, double alpha,
                                   double mu, const ProblemClass& pc) {
  CatalogParams p;
  p.alpha = alpha;
  p.mu = mu;
  p.m = pc.m;
  p.L = pc.L;
  if (family == "SVL")
    throw ConfigError("family_instance: SVL has no free parameters; use design()");
  return catalog(family, p);
}

// Certified rate as a tuning objective; uncertifiable or invalid parameter
// points score kUncertifiableRate.
inline double rate_objective(const std::string& family, double alpha, double mu,
                             const ProblemClass& pc, double bisect_tol = 1e-4) {
  if (!(alpha > 0) || mu == 0.0) return kUncertifiableRate;
  try {
    auto res = certify_rate(family_instance(family, alpha, mu, pc), pc, bisect_tol);
    return res.certifiable ? res.rho_star : kUncertifiableRate;
  } catch (const ConfigError&) {
    return kUncertifiableRate;
  } catch (const SolverError&) {
    return kUncertifiableRate;
  }
}

// Stepsize tuning at fixed mu over a positive bracket (default
// [1e-3/L, 4/m]); derivative-free, local-optimum contract.
inline TunePoint tune_alpha(const std::string& family, const ProblemClass& pc,
                            double mu = 1.0, double alpha_lo = 0.0,
                            double alpha_hi = 0.0, double bisect_tol = 1e-4) {
  if (alpha_lo <= 0.0) alpha_lo = 1e-3 / pc.L;
  if (alpha_hi <= 0.0) alpha_hi = 4.0 / pc.m;
  if (!(alpha_lo < alpha_hi)) throw ConfigError("tune_alpha: empty bracket");
  // search in log(alpha): the stable region spans orders of magnitude
  const double la = std::log(alpha_lo), lb = std::log(alpha_hi);
  auto obj = [&](double lalpha) {
    return rate_objective(family, std::exp(lalpha), mu, pc, bisect_tol);
  };
  auto [lx, fx] = tuner_detail::brent_minimize(obj, la, lb, 1e-5);
  // a coarse sweep guards against landing in a side valley
  for (int i = 0; i <= 8; ++i) {
    const double l0 = la + (lb - la) * i / 8.0;
    const double f0 = obj(l0);
    if (f0 < fx) {
      auto [l1, f1] = tuner_detail::brent_minimize(
          obj, std::max(la, l0 - (lb - la) / 8.0), std::min(lb, l0 + (lb - la) / 8.0), 1e-5);
      if (f1 < fx) {
        lx = l1;
        fx = f1;
      }
    }
  }
  TunePoint out;
  out.alpha = std::exp(lx);
  out.mu = mu;
  out.rho = fx;
  out.certifiable = fx < kUncertifiableRate;
  return out;
}

// Joint (alpha, mu) tuning by simplex descent with restarts; simplex in
// (log alpha, mu) coordinates, initialized around (2/(L+m), 1).
inline TunePoint tune_alpha_mu(const std::string& family, const ProblemClass& pc,
                               unsigned seed = 1, double bisect_tol = 1e-4) {
  auto obj = [&](const Vector& x) {
    return rate_objective(family, std::exp(x(0)), x(1), pc, bisect_tol);
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  TunePoint best;
  const double la0 = std::log(2.0 / (pc.L + pc.m));
  for (int restart = 0; restart < 4; ++restart) {
    Vector c(2);
    if (restart == 0) {
      c << la0, 1.0;
    } else {
      c << la0 + 1.5 * unif(rng), 0.2 + 1.3 * std::abs(unif(rng));
    }
    std::vector<Vector> simplex = {c, c, c};
    simplex[1](0) += 0.3;
    simplex[2](1) += 0.3 * std::max(0.5, std::abs(c(1)));
    auto res = tuner_detail::nelder_mead(obj, simplex, 1e-5);
    if (res.f < best.rho) {
      best.alpha = std::exp(res.x(0));
      best.mu = res.x(1);
      best.rho = res.f;
      best.certifiable = res.f < kUncertifiableRate;
    }
  }
  return best;
}

struct RateCurvePoint {
  double sigma = 0.0;
  double rho = kUncertifiableRate;
  double alpha = 0.0;
  double mu = 1.0;
  bool certifiable = false;
  std::string status = "ok";
};

struct RateCurve {
  std::string algorithm;
  double kappa = 1.0;
  std::vector<RateCurvePoint> points;
};

// Tuned rate per (family, sigma); SVL points come from the parameter
// design. Grid points run on a bounded worker pool.
inline std::vector<RateCurve> rate_curve(const std::vector<std::string>& families,
                                         double kappa,
                                         const std::vector<double>& sigma_grid,
                                         bool tune_mu, int threads = 0,
                                         double bisect_tol = 1e-4) {
  if (threads <= 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<RateCurve> curves(families.size());
  struct Job {
    size_t fi;
    size_t si;
  };
  std::vector<Job> jobs;
  for (size_t fi = 0; fi < families.size(); ++fi) {
    curves[fi].algorithm = families[fi];
    curves[fi].kappa = kappa;
    curves[fi].points.resize(sigma_grid.size());
    for (size_t si = 0; si < sigma_grid.size(); ++si) jobs.push_back({fi, si});
  }
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const auto [fi, si] = jobs[j];
      const double sigma = sigma_grid[si];
      RateCurvePoint pt;
      pt.sigma = sigma;
      try {
        ProblemClass pc = ProblemClass::from_kappa(kappa, sigma);
        if (families[fi] == "SVL") {
          SVLDesign dsn = design(pc);
          pt.alpha = dsn.alpha;
          pt.mu = 1.0;
          pt.rho = dsn.rho;
          pt.certifiable = dsn.rho < 1.0 + 1e-12;
        } else {
          TunePoint tp = tune_mu ? tune_alpha_mu(families[fi], pc)
                                 : tune_alpha(families[fi], pc);
          pt.alpha = tp.alpha;
          pt.mu = tp.mu;
          pt.rho = tp.rho;
          pt.certifiable = tp.certifiable;
          if (!tp.certifiable) pt.status = "uncertifiable";
        }
      } catch (const std::exception& e) {
        pt.status = std::string("error: ") + e.what();
      }
      curves[fi].points[si] = pt;
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return curves;
}

}  // namespace dopt
