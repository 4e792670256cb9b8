#include <catch2/catch_amalgamated.hpp>

#include "dopt/json_io.hpp"
#include "dopt/netsim.hpp"
#include "dopt/realization.hpp"

using namespace dopt;

namespace {

std::vector<Realization> full_catalog() {
  const double m = 1.0, L = 10.0;
  return {make_extra(0.1, 1.0),       make_nids(0.2, 1.0),
          make_diging(0.05, 0.8),     make_aug_dgm(0.05, 0.8),
          make_exact_diffusion(0.1, 1.0), make_udig(0.05, 0.5, m, L),
          make_uextra(0.05, 0.5, m, L),   make_svl(0.05, 0.5, 1.5, 1.0)};
}

}  // namespace

TEST_CASE("catalog entry: EXTRA matches the table") {
  Realization r = make_extra(0.1, 1.0);
  Matrix a_expect(3, 3);
  a_expect << 2, -1, 0.1, 1, 0, 0, 0, 0, 0;
  CHECK((r.A - a_expect).norm() == 0.0);
  CHECK(r.B_u(0, 0) == -0.1);
  CHECK(r.B_u(2, 0) == 1.0);
  CHECK(r.B_v(0, 0) == -1.0);
  CHECK(r.C_y(0, 0) == 1.0);
  Matrix cz(1, 3);
  cz << 1, -0.5, 0;
  CHECK((r.C_z - cz).norm() == 0.0);
  Matrix fx(1, 3);
  fx << 1, -1, 0.1;
  CHECK((r.F_x - fx).norm() == 0.0);
  CHECK(r.D_yu(0, 0) == 0.0);
  CHECK(r.D_zu(0, 0) == 0.0);
  CHECK(r.D_zv(0, 0) == 0.0);
}

TEST_CASE("catalog entry: NIDS communicated row") {
  Realization r = make_nids(0.2, 1.0);
  Matrix cz(1, 3);
  cz << 1, -0.5, 0.1;
  CHECK((r.C_z - cz).norm() < 1e-15);
  CHECK(r.D_zu(0, 0) == Catch::Approx(-0.1));
  CHECK(r.D_zv(0, 0) == 0.0);
}

TEST_CASE("catalog entry: SVL template shape") {
  Realization r = make_svl(0.1, 0.4, 1.4, 1.0);
  REQUIRE(r.n_states() == 2);
  REQUIRE(r.n_comm() == 1);
  CHECK(r.A(0, 1) == 0.4);
  CHECK(r.B_u(0, 0) == -0.1);
  CHECK(r.B_v(0, 0) == -1.4);
  CHECK(r.B_v(1, 0) == -1.0);
  CHECK(r.D_yv(0, 0) == -1.0);
  CHECK(r.F_x(0, 1) == 1.0);
}

TEST_CASE("catalog dispatch and errors") {
  CatalogParams p;
  p.alpha = 0.1;
  CHECK(catalog("EXTRA", p).name == "EXTRA");
  CHECK_THROWS_AS(catalog("NoSuchMethod", p), ConfigError);
  CatalogParams bad;
  bad.alpha = -1;
  CHECK_THROWS_AS(catalog("EXTRA", bad), ConfigError);
  CatalogParams udig_missing;
  udig_missing.alpha = 0.1;
  udig_missing.L = 0.0;  // sector bounds not supplied
  CHECK_THROWS_AS(catalog("uDIG", udig_missing), ConfigError);
}

TEST_CASE("fixed point exists for the whole catalog") {
  for (const auto& r : full_catalog()) {
    INFO(r.name);
    auto w = check_fixed_point(r);
    REQUIRE(w.has_value());
    const int nx = r.n_states();
    CHECK(((r.A - Matrix::Identity(nx, nx)) * w->p_vec).norm() < 1e-8);
    CHECK((r.F_x * w->p_vec).norm() < 1e-8);
    CHECK((r.C_y * w->p_vec)(0, 0) == Catch::Approx(1.0));
    CHECK(((r.A - Matrix::Identity(nx, nx)) * w->q_vec - r.B_u).norm() < 1e-8);
    CHECK((r.C_y * w->q_vec - r.D_yu).norm() < 1e-8);
    CHECK((r.C_z * w->q_vec - r.D_zu).norm() < 1e-8);
  }
}

TEST_CASE("two-state template needs a nonzero coupling") {
  CHECK_FALSE(check_fixed_point(make_svl(0.05, 0.0, 1.0, 1.0)).has_value());
}

TEST_CASE("fixed point fails by a rank argument") {
  // single state, A = 1: [B_u; D_yu; D_zu] = [1;0;0] not in col([0;1;1])
  Realization r;
  r.A = Matrix::Constant(1, 1, 1.0);
  r.B_u = Matrix::Constant(1, 1, 1.0);
  r.B_v = Matrix::Constant(1, 1, 0.0);
  r.C_y = Matrix::Constant(1, 1, 1.0);
  r.D_yu = Matrix::Zero(1, 1);
  r.D_yv = Matrix::Zero(1, 1);
  r.C_z = Matrix::Constant(1, 1, 1.0);
  r.D_zu = Matrix::Zero(1, 1);
  r.D_zv = Matrix::Zero(1, 1);
  r.F_x = Matrix::Zero(0, 1);
  r.F_u = Matrix::Zero(0, 1);
  r.name = "integrator";
  CHECK_FALSE(check_fixed_point(r).has_value());
}

TEST_CASE("implementability across the catalog") {
  for (const auto& r : full_catalog()) {
    INFO(r.name);
    CHECK(check_implementable(r));
  }
}

TEST_CASE("proximal feedthrough is not implementable") {
  Realization r = make_svl(0.05, 0.5, 1.5, 1.0);
  r.D_yu(0, 0) = -0.7;  // y depends on u which depends on y
  CHECK_FALSE(check_implementable(r));
}

TEST_CASE("evaluation order respects staged communication") {
  Realization r = make_uextra(0.05, 0.5, 1.0, 10.0);
  auto order = evaluation_order(r);
  REQUIRE(order.size() == 3);
  // z2 needs u and v1, so node 2 comes last
  CHECK(order[2] == 2);
}

TEST_CASE("constructed fixed point is a fixed point") {
  const int n = 4, d = 2;
  std::mt19937_64 rng(99);
  std::vector<QuadraticLocalFunction> fs;
  for (int i = 0; i < n; ++i) fs.push_back(random_quadratic(d, 1.0, 10.0, rng));
  auto opt = quadratic_optimum(fs);
  REQUIRE(opt.gradients.colwise().sum().norm() < 1e-8);

  for (const auto& r : full_catalog()) {
    INFO(r.name);
    auto w = check_fixed_point(r);
    REQUIRE(w.has_value());
    FixedPoint fp = construct_fixed_point(r, *w, opt.gradients, opt.y_opt);

    // stationarity conditions: consensus on y and z, zero gossip, balanced u
    Matrix pi = consensus_projector(n);
    CHECK((fp.y - Matrix::Ones(n, 1) * opt.y_opt).norm() < 1e-10);
    CHECK(fp.u.colwise().sum().norm() < 1e-10);
    const int p = r.n_comm();
    CHECK((kron(Matrix::Identity(n, n) - pi, Matrix::Identity(p, p)) * fp.z).norm() <
          1e-9 * (1.0 + fp.z.norm()));
    CHECK(fp.v.norm() == 0.0);

    // invariant under one synchronous round for an arbitrary admissible graph
    std::mt19937_64 lrng(5 + static_cast<unsigned>(r.name.size()));
    Matrix lap = random_laplacian(n, 0.6, lrng);
    auto order = evaluation_order(r);
    auto grad = [&](int i, const RowVector& y) { return fs[i].gradient(y); };
    auto sig = netsim_detail::evaluate_round(r, fp.x, lap, grad, order);
    Matrix xn = netsim_detail::state_update(r, fp.x, sig);
    CHECK((xn - fp.x).norm() < 1e-9 * (1.0 + fp.x.norm()));
  }
}

TEST_CASE("fixed point from zero gradients is zero") {
  Realization r = make_extra(0.1, 1.0);
  auto w = check_fixed_point(r);
  REQUIRE(w.has_value());
  Matrix g = Matrix::Zero(3, 1);
  RowVector y0 = RowVector::Zero(1);
  FixedPoint fp = construct_fixed_point(r, *w, g, y0);
  CHECK(fp.x.norm() == 0.0);
}

TEST_CASE("inconsistent optimum is rejected") {
  Realization r = make_extra(0.1, 1.0);
  auto w = check_fixed_point(r);
  Matrix g = Matrix::Ones(3, 1);  // gradients cannot all be positive at the optimum
  CHECK_THROWS_AS(construct_fixed_point(r, *w, g, RowVector::Zero(1)), ConfigError);
}

TEST_CASE("algorithm JSON round trip and validation") {
  Realization r = make_nids(0.2, 1.0);
  json j = realization_to_json(r);
  Realization back = realization_from_json(j);
  CHECK((back.A - r.A).norm() == 0.0);
  CHECK((back.C_z - r.C_z).norm() == 0.0);
  CHECK(back.name == "NIDS");

  json bad = j;
  bad["A"][0][0] = "oops";
  CHECK_THROWS_AS(realization_from_json(bad), ConfigError);
  json inf = j;
  inf["A"][0][0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(realization_from_json(inf), ConfigError);
  json wrong = j;
  wrong["n_states"] = 7;
  CHECK_THROWS_AS(realization_from_json(wrong), ConfigError);
}
