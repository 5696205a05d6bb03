#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>

#include "nullflow/geometry.hpp"
#include "nullflow/oracle_radial.hpp"
#include "nullflow/solver.hpp"

using namespace nullflow;

namespace {

std::shared_ptr<AnnularDomain> make_dom(const InitialDataSet& data, double r0, double L,
                                        double h, GridKind kind, double alpha,
                                        bool octant = false) {
  return std::make_shared<AnnularDomain>(
      build_domain(data, r0, L, h, kind, alpha, octant));
}

SolveConfig quick_config(std::vector<double> eps) {
  SolveConfig cfg;
  cfg.eps_schedule = std::move(eps);
  cfg.s_steps = 4;
  cfg.newton_tol = 1e-10;
  cfg.max_iter = 60;
  return cfg;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("subsolution coefficient search") {
  SUBCASE("flat space returns the exact exponent") {
    CHECK(choose_alpha_subsolution(make_euclidean(3), 4.0, 32.0) == doctest::Approx(2.0));
    CHECK(choose_alpha_subsolution(make_euclidean(2), 4.0, 32.0) == doctest::Approx(1.0));
  }
  SUBCASE("schwarzschild lowers the coefficient slightly") {
    const double a = choose_alpha_subsolution(make_schwarzschild_isotropic(1.0), 10.0, 60.0);
    CHECK(a < 2.0);
    CHECK(a > 1.7);
  }
  SUBCASE("extrinsic curvature lowers it continuously") {
    const double a2 = choose_alpha_subsolution(make_radial_traceless(0.0, 2.0), 10.0, 60.0);
    const double a4 = choose_alpha_subsolution(make_radial_traceless(0.0, 4.0), 10.0, 60.0);
    CHECK(a4 <= a2);
    CHECK(a4 > 1.8);
    CHECK(a4 <= 1.92 + 1e-12);
  }
  SUBCASE("no qualifying coefficient suggests a larger start radius") {
    CHECK_THROWS_WITH_AS(choose_alpha_subsolution(make_radial_traceless(0.0, 4.0), 0.5, 4.0),
                         doctest::Contains("increase r_min"), std::runtime_error);
  }
}

TEST_CASE("domain construction") {
  const InitialDataSet flat = make_euclidean(3);
  SUBCASE("outer radius is exp(L / alpha)") {
    const auto dom = make_dom(flat, 1.0, 2.0 * std::log(8.0), 0.1, GridKind::radial, 2.0);
    CHECK(dom->outer_radius == doctest::Approx(8.0).epsilon(1e-12));
    CHECK_FALSE(dom->inner_ids.empty());
    CHECK_FALSE(dom->outer_ids.empty());
  }
  SUBCASE("outer radius at or below E0 is rejected") {
    CHECK_THROWS_AS(build_domain(flat, 2.0, 2.0 * std::log(1.5), 0.1, GridKind::radial, 2.0),
                    std::invalid_argument);
  }
  SUBCASE("2D annulus mask has both boundary sets") {
    const InitialDataSet flat2 = make_euclidean(2);
    const auto dom = make_dom(flat2, 1.0, std::log(6.0), 0.1, GridKind::cartesian, 1.0);
    CHECK(dom->dim == 2);
    CHECK_FALSE(dom->inner_ids.empty());
    CHECK_FALSE(dom->outer_ids.empty());
    CHECK_FALSE(dom->interior_ids.empty());
    for (int id : dom->interior_ids) {
      const double r = norm(dom->nodes[id].x, 2);
      CHECK(r > 1.0 - 1e-12);
      CHECK(r < 6.0 + 1e-12);
    }
  }
}

TEST_CASE("residual of the regularized operator") {
  const InitialDataSet flat = make_euclidean(3);
  const auto dom = make_dom(flat, 1.0, 2.0 * std::log(4.0), 0.05, GridKind::radial, 2.0);
  SUBCASE("zero field leaves only the -eps term") {
    std::vector<double> u(dom->nodes.size(), 0.0);
    const auto R = residual_eps_s(flat, *dom, u, 0.25, 0.7);
    for (int id : dom->interior_ids)
      CHECK(R[id] == doctest::Approx(-0.25).epsilon(1e-12));
  }
  SUBCASE("positive ambient trace turns the zero field into a subsolution") {
    InitialDataSet tr = make_euclidean(3);
    tr.family = Family::custom;
    const double tau = 0.8;
    tr.extrinsic = [tau](const Vec&) {
      Mat3 k;
      for (int i = 0; i < 3; ++i) k(i, i) = tau / 3.0;
      return k;
    };
    const auto domt = make_dom(tr, 1.0, 2.0 * std::log(4.0), 0.05, GridKind::radial, 2.0);
    std::vector<double> u(domt->nodes.size(), 0.0);
    const auto R = residual_eps_s(tr, *domt, u, 0.25, 1.0);
    for (int id : domt->interior_ids)
      CHECK(R[id] == doctest::Approx(tau - 0.25).epsilon(1e-12));
  }
  SUBCASE("the operator converges to the sharp one as eps shrinks") {
    std::vector<double> u(dom->nodes.size());
    for (std::size_t i = 0; i < u.size(); ++i)
      u[i] = 2.0 * std::log(dom->nodes[i].x[0]);
    const auto Rbig = residual_eps_s(flat, *dom, u, 0.1, 1.0);
    const auto Rsmall = residual_eps_s(flat, *dom, u, 1e-3, 1.0);
    const int mid = dom->interior_ids[dom->interior_ids.size() / 2];
    CHECK(std::abs(Rsmall[mid]) < std::abs(Rbig[mid]));
    CHECK(std::abs(Rsmall[mid]) <= 5e-3);
  }
}

TEST_CASE("newton solve on the radial mesh") {
  const InitialDataSet flat = make_euclidean(3);
  const auto dom = make_dom(flat, 1.0, 2.0 * std::log(4.0), 0.05, GridKind::radial, 2.0);
  SUBCASE("s = 0 converges from the zero guess") {
    FlowSolver solver(flat, dom, quick_config({0.5}));
    const DiscreteScalarField f = solver.newton_solve(0.5, 0.0);
    CHECK(f.final_residual <= 1e-10);
    CHECK(f.newton_iters <= 30);
    for (int id : dom->inner_ids) CHECK(std::abs(f.u[id]) <= 1e-9);
  }
  SUBCASE("large eps is mildly nonlinear on a small annulus") {
    // eps >= 1 is only solvable while the boundary can carry the eps * volume
    // flux, so the window must stay compact
    const auto coarse =
        make_dom(flat, 1.0, 2.0 * std::log(1.8), 0.1, GridKind::radial, 2.0);
    FlowSolver solver(flat, coarse, quick_config({1.2}));
    const DiscreteScalarField f = solver.newton_solve(1.2, 0.0);
    CHECK(f.newton_iters <= 5);
  }
  SUBCASE("unreachable tolerance raises nonconvergence with the best iterate") {
    SolveConfig cfg = quick_config({0.5});
    cfg.newton_tol = 0.0;
    cfg.max_iter = 1;
    FlowSolver solver(flat, dom, cfg);
    CHECK_THROWS_AS(solver.newton_solve(0.5, 1.0), NonconvergenceError);
    try {
      solver.newton_solve(0.5, 1.0);
    } catch (const NonconvergenceError& e) {
      CHECK(e.best.u.size() == dom->nodes.size());
      CHECK(e.best.final_residual > 0.0);
    }
  }
}

TEST_CASE("jacobian matches finite differences of the residual") {
  const double t = 1e-6;
  auto check_dir = [&](const InitialDataSet& data, std::shared_ptr<AnnularDomain> dom,
                       double eps, double s) {
    FlowSolver solver(data, dom, quick_config({eps}));
    Rng rng(5);
    // smooth random fields keep the forward-difference truncation term small
    const double k1 = rng.uniform(0.5, 2.0), k2 = rng.uniform(0.5, 2.0);
    const double p1 = rng.uniform(0, 6.28), p2 = rng.uniform(0, 6.28);
    std::vector<double> u(dom->nodes.size()), delta(dom->nodes.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      const Vec& x = dom->nodes[i].x;
      const double r = std::max(0.3, norm(x, dom->dim));
      u[i] = 2.0 * std::log(r) + 0.1 * std::sin(k1 * x[0] + p1) * std::cos(k2 * x[1]);
      delta[i] = 0.3 * (std::sin(k2 * r + p2) + 0.5 * std::cos(k1 * (x[0] + x[1]) + p1));
    }
    const auto Jd = solver.jacobian_times(u, eps, s, delta);
    auto up = u;
    for (std::size_t i = 0; i < u.size(); ++i) up[i] += t * delta[i];
    const auto R0 = solver.residual(u, eps, s);
    const auto R1 = solver.residual(up, eps, s);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double fd = (R1[i] - R0[i]) / t;
      num = std::max(num, std::abs(fd - Jd[i]));
      den = std::max(den, std::abs(fd));
    }
    CHECK(num / den <= 1e-5);
  };
  const InitialDataSet rt = make_radial_traceless(0.0, 4.0);
  check_dir(rt, make_dom(rt, 1.0, 1.5 * std::log(8.0), 0.05, GridKind::radial, 1.5), 0.1,
            1.0);
  const InitialDataSet flat2 = make_euclidean(2);
  check_dir(flat2, make_dom(flat2, 1.0, std::log(4.0), 0.15, GridKind::cartesian, 1.0),
            0.2, 0.5);
  const InitialDataSet schw = make_schwarzschild_isotropic(0.5);
  check_dir(schw, make_dom(schw, 0.8, 1.6 * std::log(4.0), 0.25, GridKind::cartesian, 1.6,
                           true),
            0.3, 1.0);
}

TEST_CASE("homotopy in s") {
  SUBCASE("with K = 0 the march only rescales the outer datum") {
    const InitialDataSet flat = make_euclidean(3);
    const auto dom = make_dom(flat, 1.0, 2.0 * std::log(4.0), 0.05, GridKind::radial, 2.0);
    FlowSolver a(flat, dom, quick_config({0.25}));
    const DiscreteScalarField marched = a.homotopy_in_s(0.25);
    FlowSolver b(flat, dom, quick_config({0.25}));
    const DiscreteScalarField direct = b.newton_solve(0.25, 1.0);
    double gap = 0;
    for (std::size_t i = 0; i < marched.u.size(); ++i)
      gap = std::max(gap, std::abs(marched.u[i] - direct.u[i]));
    CHECK(gap <= 1e-8);
    CHECK(a.stages().size() == 5);  // s = 0, 1/4, ..., 1
  }
  SUBCASE("strong extrinsic curvature marches to s = 1 on the radial mesh") {
    const InitialDataSet rt = make_radial_traceless(0.0, 4.0);
    const double alpha = 1.5, L = alpha * std::log(9.0);
    const auto dom = make_dom(rt, 1.0, L, 0.05, GridKind::radial, alpha);
    FlowSolver solver(rt, dom, quick_config({0.125}));
    const DiscreteScalarField f = solver.homotopy_in_s(0.125);
    CHECK(f.s == 1.0);
    CHECK(f.final_residual <= 1e-10);
    for (double v : f.u) CHECK(v >= -0.125 - 1e-8);
  }
  SUBCASE("hopeless stages fail gracefully with the failing s reported") {
    const InitialDataSet rt = make_radial_traceless(0.0, 4.0);
    const auto dom = make_dom(rt, 1.0, 1.5 * std::log(9.0), 0.05, GridKind::radial, 1.5);
    SolveConfig cfg = quick_config({0.25});
    cfg.s_steps = 1;
    cfg.newton_tol = 0.0;  // unreachable
    cfg.max_iter = 2;
    FlowSolver solver(rt, dom, cfg);
    CHECK_THROWS_AS(solver.homotopy_in_s(0.25), NonconvergenceError);
  }
}

TEST_CASE("continuation in eps") {
  const InitialDataSet flat = make_euclidean(3);
  const auto dom = make_dom(flat, 1.0, 2.0 * std::log(4.0), 0.05, GridKind::radial, 2.0);
  SUBCASE("successive sup-norm gaps shrink") {
    FlowSolver solver(flat, dom, quick_config({0.2, 0.1, 0.05}));
    const auto fields = solver.continue_eps();
    REQUIRE(fields.size() == 3);
    double g01 = 0, g12 = 0;
    for (std::size_t i = 0; i < fields[0].u.size(); ++i) {
      g01 = std::max(g01, std::abs(fields[1].u[i] - fields[0].u[i]));
      g12 = std::max(g12, std::abs(fields[2].u[i] - fields[1].u[i]));
    }
    CHECK(g12 < g01);
  }
  SUBCASE("schedule entries above the solvability threshold are skipped") {
    // on the annulus out to r = 8 the largest solvable eps sits near 0.3
    const auto wide = make_dom(flat, 1.0, 2.0 * std::log(8.0), 0.05, GridKind::radial, 2.0);
    FlowSolver solver(flat, wide, quick_config({0.5, 0.25, 0.1}));
    const auto fields = solver.continue_eps();
    REQUIRE(fields.size() == 1);
    CHECK(fields[0].eps == 0.1);
    CHECK(solver.skipped_head_eps().size() == 2);
    // only records of converged stages survive
    for (const auto& st : solver.stages()) CHECK(st.eps == 0.1);
  }
  SUBCASE("single-entry schedule equals the plain homotopy result") {
    FlowSolver a(flat, dom, quick_config({0.2}));
    const auto fields = a.continue_eps();
    REQUIRE(fields.size() == 1);
    FlowSolver b(flat, dom, quick_config({0.2}));
    const DiscreteScalarField direct = b.homotopy_in_s(0.2);
    for (std::size_t i = 0; i < direct.u.size(); i += 7)
      CHECK(fields[0].u[i] == doctest::Approx(direct.u[i]).epsilon(1e-12));
  }
  SUBCASE("empty schedule is rejected") {
    SolveConfig cfg;
    cfg.eps_schedule = {};
    CHECK_THROWS_AS(FlowSolver(flat, dom, cfg).continue_eps(), std::invalid_argument);
  }
  SUBCASE("schedule below the h/4 floor is rejected") {
    FlowSolver solver(flat, dom, quick_config({0.2, 0.004}));
    CHECK_THROWS_AS(solver.continue_eps(), std::invalid_argument);
  }
}

TEST_CASE("translating-graph identity ties the solved field to the product geometry") {
  // the rescaled graph of u_eps has null expansion sqrt(|grad u|^2 + eps^2)
  const InitialDataSet flat = make_euclidean(3);
  const auto dom = make_dom(flat, 1.0, 2.0 * std::log(6.0), 0.02, GridKind::radial, 2.0);
  const double eps = 0.125;
  FlowSolver solver(flat, dom, quick_config({eps}));
  const DiscreteScalarField f = solver.newton_solve(eps, 1.0);

  GraphFunction g;
  g.dom = dom.get();
  g.w.resize(dom->nodes.size());
  g.defined.assign(dom->nodes.size(), 1);
  for (std::size_t i = 0; i < f.u.size(); ++i) g.w[i] = f.u[i] / eps;

  const auto gn = grid_gradient_norm(*dom, flat, f.u);
  int checked = 0;
  for (std::size_t k = 10; k + 10 < dom->nodes.size(); k += 17) {
    const int id = int(k);
    if (dom->nodes[id].role != NodeRole::interior) continue;
    const double lhs = residual_mots(flat, g, id);  // theta+ of the rescaled graph
    const double rhs = std::sqrt(gn[id] * gn[id] + eps * eps);
    CHECK(lhs == doctest::Approx(rhs).epsilon(0.02));
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("checkpoints round-trip exactly") {
  namespace fs = std::filesystem;
  const InitialDataSet flat = make_euclidean(3);
  const auto dom = make_dom(flat, 1.0, 2.0 * std::log(4.0), 0.1, GridKind::radial, 2.0);
  FlowSolver solver(flat, dom, quick_config({0.5}));
  const DiscreteScalarField f = solver.newton_solve(0.5, 1.0);
  const fs::path path = fs::temp_directory_path() / "nullflow_ckpt.txt";
  write_checkpoint(path.string(), f);
  const DiscreteScalarField back = read_checkpoint(path.string(), dom);
  CHECK(back.eps == f.eps);
  CHECK(back.s == f.s);
  CHECK(back.newton_iters == f.newton_iters);
  for (std::size_t i = 0; i < f.u.size(); ++i) CHECK(back.u[i] == f.u[i]);
  fs::remove(path);
}

}  // TEST_SUITE
