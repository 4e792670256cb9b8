// Command-line front end: certification, SVL design, parameter tuning,
// network simulation, worst-case construction, Laplacian reconstruction.
//
// Exit codes: 0 success, 1 bad configuration, 2 infeasible/uncertifiable,
// 3 numerical solver failure.

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "dopt/adversary.hpp"
#include "dopt/json_io.hpp"
#include "dopt/netsim.hpp"
#include "dopt/tuner.hpp"

namespace {

using namespace dopt;

struct CommonOpts {
  std::string alg;
  std::string alg_file;
  double kappa = 0.0;
  double m = 0.0, L = 0.0;
  double sigma = 0.0;
  std::string sigma_grid;
  double alpha = 0.0;
  double mu = 1.0;
  int n = 2, d = 1, iters = 100;
  unsigned seed = 0;
  double tol = 1e-4;
  std::string out;
  std::string format = "csv";
  int threads = 0;
};

ProblemClass problem_class_of(const CommonOpts& o) {
  if (o.kappa > 0.0) {
    if (o.m > 0.0 || o.L > 0.0)
      throw ConfigError("give either --kappa or --m/--L, not both");
    return ProblemClass::from_kappa(o.kappa, o.sigma);
  }
  if (o.m > 0.0 && o.L > 0.0) return ProblemClass(o.m, o.L, o.sigma);
  throw ConfigError("problem class required: --kappa K or --m M --L L");
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  if (out.empty()) throw ConfigError("empty sigma grid");
  return out;
}

Realization resolve_algorithm(const CommonOpts& o, const ProblemClass& pc,
                              const SVLDesign* dsn = nullptr) {
  if (!o.alg_file.empty()) return load_realization(o.alg_file);
  if (o.alg.empty()) throw ConfigError("an algorithm is required: --alg or --alg-file");
  if (o.alg == "SVL") {
    if (dsn) return dsn->realization();
    SVLDesign d = design(pc);
    if (o.alpha > 0.0) d.alpha = o.alpha;  // explicit override
    return d.realization();
  }
  CatalogParams p;
  p.alpha = o.alpha;
  p.mu = o.mu;
  p.m = pc.m;
  p.L = pc.L;
  if (p.alpha <= 0.0) throw ConfigError("--alpha is required for " + o.alg);
  return catalog(o.alg, p);
}

void write_text(const std::string& path, const std::string& body) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << body;
}

int cmd_certify(const CommonOpts& o) {
  const ProblemClass pc = problem_class_of(o);
  const Realization r = resolve_algorithm(o, pc);
  if (auto w = check_fixed_point(r); !w) {
    std::cerr << "error: '" << r.name
              << "' fails the fixed-point existence conditions "
                 "(no admissible optimum-consistent fixed point)\n";
    return 1;
  }
  const auto t0 = std::chrono::steady_clock::now();
  CertifyResult res = certify_rate(r, pc, o.tol);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!res.certifiable) {
    std::cout << "{\"status\": \"uncertifiable\", \"wall_time\": " << wall << "}\n";
    return 2;
  }
  json j;
  j["rho"] = res.rho_star;
  j["margins"] = {{"definiteness", res.cert.margin}};
  j["wall_time"] = wall;
  std::cout << j.dump(2) << "\n";
  write_text(o.out, certificate_to_json(res.cert).dump(2) + "\n");
  return 0;
}

int cmd_design_svl(const CommonOpts& o, double eps) {
  const ProblemClass pc = problem_class_of(o);
  SVLDesign d = design(pc, eps);
  json j = design_to_json(d);
  std::cout << j.dump(2) << "\n";
  write_text(o.out, j.dump(2) + "\n");
  return 0;
}

int cmd_tune(const CommonOpts& o, bool tune_mu) {
  const ProblemClass pc = problem_class_of(o);
  if (o.alg == "SVL") {
    SVLDesign d = design(pc);
    json j = design_to_json(d);
    j["note"] = "SVL has no tunable parameters; design values returned";
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  TunePoint tp = tune_mu ? tune_alpha_mu(o.alg, pc, o.seed)
                         : tune_alpha(o.alg, pc, o.mu);
  json j;
  j["algorithm"] = o.alg;
  j["alpha"] = tp.alpha;
  j["mu"] = tp.mu;
  j["rho"] = tp.rho;
  j["certifiable"] = tp.certifiable;
  std::cout << j.dump(2) << "\n";
  write_text(o.out, j.dump(2) + "\n");
  return tp.certifiable ? 0 : 2;
}

int cmd_rate_curve(const CommonOpts& o, const std::string& algs, bool tune_mu) {
  const double kappa = o.kappa > 0 ? o.kappa : (o.m > 0 ? o.L / o.m : 0.0);
  if (kappa < 1) throw ConfigError("rate-curve: --kappa required");
  std::vector<double> grid = parse_grid(o.sigma_grid.empty() ? std::to_string(o.sigma)
                                                             : o.sigma_grid);
  std::vector<std::string> families;
  if (algs == "all")
    families = catalog_names();
  else {
    std::stringstream ss(algs);
    std::string tok;
    while (std::getline(ss, tok, ',')) families.push_back(tok);
  }
  auto curves = rate_curve(families, kappa, grid, tune_mu, o.threads, o.tol);
  std::ostringstream csv;
  csv << "algorithm,kappa,sigma,rho,alpha,mu,status\n";
  csv << std::setprecision(12);
  for (const auto& c : curves)
    for (const auto& pt : c.points)
      csv << c.algorithm << "," << c.kappa << "," << pt.sigma << "," << pt.rho << ","
          << pt.alpha << "," << pt.mu << "," << pt.status << "\n";
  std::cout << csv.str();
  write_text(o.out, csv.str());
  return 0;
}

int cmd_simulate(const CommonOpts& o, bool constant_graph) {
  const ProblemClass pc = problem_class_of(o);
  SVLDesign dsn;
  if (o.alg == "SVL") dsn = design(pc);
  const Realization r = resolve_algorithm(o, pc, o.alg == "SVL" ? &dsn : nullptr);

  std::mt19937_64 rng(o.seed);
  std::vector<QuadraticLocalFunction> fs;
  for (int i = 0; i < o.n; ++i) fs.push_back(random_quadratic(o.d, pc.m, pc.L, rng));
  auto laps = random_laplacian_sequence(o.n, pc.sigma, o.iters, o.seed + 1, constant_graph);

  Matrix x0(o.n, o.d);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < o.n; ++i)
    for (int j = 0; j < o.d; ++j) x0(i, j) = gauss(rng);
  Matrix init = canonical_initialization(r, fs, x0, laps.at(0));
  Trajectory traj = run(r, fs, laps, o.iters, init);

  auto norms = traj.x_err_norms();
  std::ostringstream csv;
  csv << "k,x_err,y_err\n" << std::setprecision(12);
  for (size_t k = 0; k < traj.steps.size(); ++k) {
    const double yerr = traj.has_fixed_point
                            ? (traj.steps[k].y - traj.fixed_point.y).norm()
                            : traj.steps[k].y.norm();
    csv << k << "," << norms[k] << "," << yerr << "\n";
  }
  std::cout << csv.str();
  write_text(o.out, csv.str());
  try {
    const double rate = empirical_rate(norms, std::min(o.iters / 4, 20));
    std::cerr << "empirical rate: " << rate << "\n";
  } catch (const SolverError&) {
    std::cerr << "empirical rate: n/a (converged too fast)\n";
  }
  return 0;
}

int cmd_worst_case(const CommonOpts& o, bool reconstruct) {
  const ProblemClass pc = problem_class_of(o);
  SVLDesign dsn;
  if (o.alg == "SVL") dsn = design(pc);
  const Realization r = resolve_algorithm(o, pc, o.alg == "SVL" ? &dsn : nullptr);
  CertifyResult cr = certify_rate(r, pc, o.tol);
  if (!cr.certifiable) {
    std::cerr << "error: rate not certifiable within the bisection bracket\n";
    return 2;
  }
  WorstCaseRun run = worst_trajectory(r, pc, cr.cert, o.n, o.d, o.iters, o.seed);

  std::ostringstream csv;
  csv << "k,x_err,V,increment,min_sector,graph_value";
  if (reconstruct) csv << ",achieved_norm,realizable";
  csv << "\n" << std::setprecision(12);
  auto norms = run.trajectory.x_err_norms();
  for (size_t k = 0; k < run.steps.size(); ++k) {
    csv << k << "," << norms[k] << "," << run.lyapunov[k] << ","
        << run.increments[k] << "," << run.steps[k].min_sector << ","
        << run.steps[k].graph_value;
    if (reconstruct) {
      auto rec = reconstruct_laplacian(run.trajectory.steps[k].z,
                                       run.trajectory.steps[k].v, o.n);
      if (rec)
        csv << "," << rec->achieved_norm << ","
            << (rec->achieved_norm <= pc.sigma + 1e-6 ? "yes" : "no");
      else
        csv << ",,infeasible";
    }
    csv << "\n";
  }
  std::cout << csv.str();
  write_text(o.out, csv.str());
  const double rate = empirical_rate(norms, std::min(static_cast<int>(norms.size()) / 3, 20));
  std::cerr << "certified rho: " << cr.rho_star << ", adversarial empirical rate: " << rate
            << "\n";
  return 0;
}

int cmd_reconstruct(const CommonOpts& o, const std::string& zfile,
                    const std::string& vfile) {
  std::ifstream zin(zfile), vin(vfile);
  if (!zin || !vin) throw ConfigError("cannot open z/v input files");
  json zj, vj;
  zin >> zj;
  vin >> vj;
  Matrix z = matrix_from_json(zj, "z");
  Matrix v = matrix_from_json(vj, "v");
  auto rec = reconstruct_laplacian(z, v, o.n);
  if (!rec) {
    std::cout << "{\"status\": \"infeasible\"}\n";
    return 2;
  }
  json j;
  j["achieved_norm"] = rec->achieved_norm;
  j["laplacian"] = matrix_to_json(rec->laplacian);
  j["within_sigma"] = rec->achieved_norm <= o.sigma + 1e-6;
  std::cout << j.dump(2) << "\n";
  write_text(o.out, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Worst-case rate certification and design for first-order "
               "distributed optimization over time-varying graphs"};
  app.require_subcommand(1);

  CommonOpts o;
  auto add_common = [&](CLI::App* sub, bool needs_alg) {
    if (needs_alg) {
      sub->add_option("--alg", o.alg, "catalog algorithm name");
      sub->add_option("--alg-file", o.alg_file, "algorithm definition JSON");
    }
    sub->add_option("--kappa", o.kappa, "condition ratio (maps to m=1, L=kappa)");
    sub->add_option("--m", o.m, "sector lower bound");
    sub->add_option("--L", o.L, "sector upper bound");
    sub->add_option("--sigma", o.sigma, "spectral gap bound in [0,1)");
    sub->add_option("--alpha", o.alpha, "stepsize");
    sub->add_option("--mu", o.mu, "overrelaxation parameter");
    sub->add_option("--n", o.n, "number of agents");
    sub->add_option("--d", o.d, "domain dimension");
    sub->add_option("--iters", o.iters, "iteration count");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--tol", o.tol, "bisection tolerance");
    sub->add_option("--out", o.out, "output file path");
    sub->add_option("--format", o.format, "csv or json");
    sub->add_option("--threads", o.threads, "worker threads for sweeps");
  };

  auto* certify = app.add_subcommand("certify", "bisect the smallest certifiable rate");
  add_common(certify, true);

  double design_eps = 1e-9;
  auto* design_cmd = app.add_subcommand("design-svl", "compute the designed parameters");
  add_common(design_cmd, false);
  design_cmd->add_option("--eps", design_eps, "design bisection width");

  bool tune_mu_flag = false;
  auto* tune = app.add_subcommand("tune", "optimize stepsize (and optionally mu)");
  add_common(tune, true);
  tune->add_flag("--tune-mu", tune_mu_flag, "optimize mu jointly with alpha");

  std::string algs = "all";
  auto* curve = app.add_subcommand("rate-curve", "tuned rates over a sigma grid");
  add_common(curve, false);
  curve->add_option("--algs", algs, "comma list of algorithms or 'all'");
  curve->add_option("--sigma-grid", o.sigma_grid, "comma list of sigma values");
  curve->add_flag("--tune-mu", tune_mu_flag, "optimize mu jointly with alpha");

  bool constant_graph = false;
  auto* simulate = app.add_subcommand("simulate", "simulate on random networks");
  add_common(simulate, true);
  simulate->add_flag("--constant-graph", constant_graph, "freeze the graph across iterations");

  bool reconstruct_flag = false;
  auto* worst = app.add_subcommand("worst-case", "greedy adversarial trajectory");
  add_common(worst, true);
  worst->add_flag("--reconstruct", reconstruct_flag,
                  "reconstruct an explicit Laplacian at each step");

  std::string zfile, vfile;
  auto* recon = app.add_subcommand("reconstruct-laplacian",
                                   "minimum-norm Laplacian realizing v = L z");
  add_common(recon, false);
  recon->add_option("--z", zfile, "JSON matrix of stacked z signals")->required();
  recon->add_option("--v", vfile, "JSON matrix of stacked v signals")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (certify->parsed()) return cmd_certify(o);
    if (design_cmd->parsed()) return cmd_design_svl(o, design_eps);
    if (tune->parsed()) return cmd_tune(o, tune_mu_flag);
    if (curve->parsed()) return cmd_rate_curve(o, algs, tune_mu_flag);
    if (simulate->parsed()) return cmd_simulate(o, constant_graph);
    if (worst->parsed()) return cmd_worst_case(o, reconstruct_flag);
    if (recon->parsed()) return cmd_reconstruct(o, zfile, vfile);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DesignError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
