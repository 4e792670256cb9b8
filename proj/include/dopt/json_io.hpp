#pragma once

#include <fstream>

#include <json.hpp>

#include "dopt/certifier.hpp"
#include "dopt/svl.hpp"

namespace dopt {

using nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(what + ": expected a nested array");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw ConfigError(what + ": ragged rows");
    for (int c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ConfigError(what + ": non-numeric entry");
      m(i, c) = j[i][c].get<double>();
    }
  }
  if (!m.allFinite()) throw ConfigError(what + ": NaN or Inf entry");
  return m;
}

inline json realization_to_json(const Realization& r) {
  json j;
  j["name"] = r.name;
  j["n_states"] = r.n_states();
  j["n_comm"] = r.n_comm();
  j["n_invariants"] = r.n_invariants();
  j["A"] = matrix_to_json(r.A);
  j["B_u"] = matrix_to_json(r.B_u);
  j["B_v"] = matrix_to_json(r.B_v);
  j["C_y"] = matrix_to_json(r.C_y);
  j["D_yu"] = matrix_to_json(r.D_yu);
  j["D_yv"] = matrix_to_json(r.D_yv);
  j["C_z"] = matrix_to_json(r.C_z);
  j["D_zu"] = matrix_to_json(r.D_zu);
  j["D_zv"] = matrix_to_json(r.D_zv);
  j["F_x"] = matrix_to_json(r.F_x);
  j["F_u"] = matrix_to_json(r.F_u);
  return j;
}

inline Realization realization_from_json(const json& j) {
  Realization r;
  r.name = j.value("name", "custom");
  auto get = [&](const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("algorithm file: missing ") + key);
    return matrix_from_json(j[key], key);
  };
  r.A = get("A");
  r.B_u = get("B_u");
  r.B_v = get("B_v");
  r.C_y = get("C_y");
  r.D_yu = get("D_yu");
  r.D_yv = get("D_yv");
  r.C_z = get("C_z");
  r.D_zu = get("D_zu");
  r.D_zv = get("D_zv");
  const int q = j.value("n_invariants", -1);
  if (j.contains("F_x") && (q != 0)) {
    r.F_x = get("F_x");
    r.F_u = get("F_u");
  } else {
    r.F_x = Matrix::Zero(0, r.A.rows());
    r.F_u = Matrix::Zero(0, 1);
  }
  if (j.contains("n_states") && j["n_states"].get<int>() != r.n_states())
    throw ConfigError("algorithm file: n_states disagrees with A");
  if (j.contains("n_comm") && j["n_comm"].get<int>() != r.n_comm())
    throw ConfigError("algorithm file: n_comm disagrees with C_z");
  if (q >= 0 && q != r.n_invariants())
    throw ConfigError("algorithm file: n_invariants disagrees with F_x");
  r.validate();
  return r;
}

inline Realization load_realization(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open algorithm file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("algorithm file parse error: " + std::string(e.what()));
  }
  return realization_from_json(j);
}

inline json certificate_to_json(const Certificate& c) {
  json j;
  j["rho"] = c.rho;
  j["P"] = matrix_to_json(c.P);
  j["Q"] = matrix_to_json(c.Q);
  j["R"] = matrix_to_json(c.R);
  j["margins"] = {{"definiteness", c.margin}};
  return j;
}

inline json design_to_json(const SVLDesign& d) {
  json j;
  j["alpha"] = d.alpha;
  j["beta"] = d.beta;
  j["gamma"] = d.gamma;
  j["delta"] = d.delta;
  j["rho"] = d.rho;
  j["kappa"] = d.kappa;
  j["sigma"] = d.sigma;
  j["sigma_eff"] = d.sigma_eff;
  j["gradient_limited"] = d.gradient_limited;
  return j;
}

}  // namespace dopt
