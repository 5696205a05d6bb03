#include <doctest.h>

#include <cmath>
#include <memory>

#include "nullflow/diagnostics.hpp"
#include "nullflow/oracle_radial.hpp"

using namespace nullflow;

namespace {

struct Run {
  InitialDataSet data;
  std::shared_ptr<AnnularDomain> dom;
  std::unique_ptr<FlowSolver> solver;
  WeakSolution ws;
};

std::unique_ptr<Run> solve_radial(InitialDataSet data, double r0, double alpha,
                                  double r_out, double h, std::vector<double> eps,
                                  double grad_tol, int s_steps = 4) {
  auto run = std::make_unique<Run>();
  run->data = std::move(data);
  run->dom = std::make_shared<AnnularDomain>(
      build_domain(run->data, r0, alpha * std::log(r_out), h, GridKind::radial, alpha));
  SolveConfig cfg;
  cfg.eps_schedule = std::move(eps);
  cfg.newton_tol = 1e-9;
  cfg.max_iter = 80;
  cfg.s_steps = s_steps;
  run->solver = std::make_unique<FlowSolver>(run->data, run->dom, cfg);
  run->ws = extract_limit(run->solver->continue_eps());
  detect_plateaus(run->ws, run->data, default_plateau_tol(run->ws), grad_tol);
  compute_flow_normals(run->ws, run->data);
  return run;
}

const Run& flat_run() {
  static const auto run = solve_radial(make_euclidean(3), 1.0, 2.0, 8.0, 0.05,
                                       {0.5, 0.25, 0.125, 0.0625, 0.03125}, 0.05, 1);
  return *run;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("interior bound constants") {
  // n = 2, K = 0, R = 1: lambda = 24, alpha = 12, bound = 24/(sqrt(240)-12)
  const InteriorBoundConstants c = interior_bound_constants(2, 0.0, 0.0, 1.0);
  CHECK(c.lambda == doctest::Approx(24.0).epsilon(1e-12));
  CHECK(c.alpha == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(c.bound == doctest::Approx(6.873).epsilon(1e-3));
  CHECK(c.bound == doctest::Approx(24.0 / (std::sqrt(240.0) - 12.0)).epsilon(1e-12));

  SUBCASE("bound diverges as the ball shrinks") {
    CHECK(interior_bound_constants(2, 0.0, 0.0, 1e-6).bound > 1e5);
  }
  SUBCASE("formula is monotone in the extrinsic norms") {
    double prev = 0;
    for (double K0 : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      const double b = interior_bound_constants(2, K0, 0.0, 1.0).bound;
      CHECK(b >= prev);
      prev = b;
    }
    prev = 0;
    for (double K1 : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      const double b = interior_bound_constants(2, 1.0, K1, 1.0).bound;
      CHECK(b >= prev);
      prev = b;
    }
  }
}

TEST_CASE("interior bound check on the flat flow") {
  const Run& run = flat_run();
  WeakSolution ws = run.ws;
  // a node near r = 2.2 whose half-unit ball stays in the smooth zone
  // (the domain cutoff flattens u beyond r_out / e)
  int node = -1;
  for (std::size_t i = 0; i < run.dom->nodes.size(); ++i)
    if (std::abs(run.dom->nodes[i].x[0] - 2.2) < 0.02) node = int(i);
  REQUIRE(node >= 0);
  const EstimateReport rep = interior_bound_check(run.data, ws, node, 0.5);
  CHECK(rep.applicable);
  CHECK(rep.pass);
  // measured theta+ = 2/2.2, far below the formula value
  CHECK(rep.lhs == doctest::Approx(2.0 / 2.2).epsilon(0.02));
  CHECK(rep.rhs >= 2.0 / 1.7 - 0.05);  // at least the shell maximum
  CHECK(rep.margin > 0.3);
}

TEST_CASE("interior bound check is inapplicable across plateaus") {
  auto run = solve_radial(make_radial_traceless(0.0, 4.0), 1.0, 1.5, 9.0, 0.05,
                          {0.1, 0.05, 0.025, 0.0125}, 0.05, 5);
  // ball of radius 1 around r = 1.5 meets the t = 0 plateau
  int node = -1;
  for (std::size_t i = 0; i < run->dom->nodes.size(); ++i)
    if (std::abs(run->dom->nodes[i].x[0] - 1.5) < 0.02) node = int(i);
  REQUIRE(node >= 0);
  const EstimateReport rep = interior_bound_check(run->data, run->ws, node, 1.0);
  CHECK_FALSE(rep.applicable);
  CHECK(rep.pass);
}

TEST_CASE("area growth identity on the flat flow") {
  const Run& run = flat_run();
  WeakSolution ws = run.ws;
  std::vector<double> ts;
  for (int k = 0; k <= 14; ++k) ts.push_back(0.2 + 0.08 * k);
  const MonotonicityReport rep = monotonicity_check(ws, run.data, ts);
  REQUIRE_FALSE(rep.empty);
  CHECK(rep.max_rel_residual <= 0.05);
  // integrated form: |Sigma_t| = 4 pi e^t for K = 0
  for (const auto& row : rep.rows)
    if (row.area > 0)
      CHECK(row.area == doctest::Approx(4 * kPi * std::exp(row.t)).epsilon(0.05));
}

TEST_CASE("area growth identity for schwarzschild data") {
  // E0 = sphere r = 0.6 (outside the horizon); |Sigma_t| = |Sigma_0| e^t
  auto run = solve_radial(make_schwarzschild_isotropic(1.0), 0.6, 1.55, 11.0, 0.02,
                          {0.1, 0.05, 0.025, 0.0125, 0.005}, 0.02, 1);
  std::vector<double> ts;
  for (int k = 2; k <= 20; ++k) ts.push_back(0.05 * k);
  const MonotonicityReport rep = monotonicity_check(run->ws, run->data, ts);
  REQUIRE_FALSE(rep.empty);
  CHECK(rep.max_rel_residual <= 0.02);
  const double a0 = surface_area(sphere_sample(run->data, 0.6, 512));
  for (const auto& row : rep.rows)
    if (row.area > 0 && row.t <= 1.0)
      CHECK(row.area / a0 == doctest::Approx(std::exp(row.t)).epsilon(0.02));
}

TEST_CASE("monotonicity report is empty without enough samples") {
  const Run& run = flat_run();
  WeakSolution ws = run.ws;
  CHECK(monotonicity_check(ws, run.data, {0.5}).empty);
  CHECK(monotonicity_check(ws, run.data, {}).empty);
}

TEST_CASE("a priori estimate suite passes on converged stages") {
  SUBCASE("flat flow") {
    const Run& run = flat_run();
    const auto reports =
        apriori_suite(run.data, *run.dom, run.solver->stages(), 1e-9);
    REQUIRE_FALSE(reports.empty());
    for (const auto& rep : reports) {
      INFO(rep.name, " margin ", rep.margin);
      CHECK(rep.pass);
    }
  }
  SUBCASE("strong extrinsic curvature") {
    auto run = solve_radial(make_radial_traceless(0.0, 4.0), 1.0, 1.5, 9.0, 0.05,
                            {0.1, 0.05, 0.025, 0.0125}, 0.05, 5);
    const auto reports =
        apriori_suite(run->data, *run->dom, run->solver->stages(), 1e-9);
    bool saw_midstage = false;
    for (const auto& rep : reports) {
      INFO(rep.name, " margin ", rep.margin);
      CHECK(rep.pass);
      if (rep.name.find("s=0.4") != std::string::npos) saw_midstage = true;
    }
    CHECK(saw_midstage);  // the continuity-method stages are all audited
  }
}

TEST_CASE("lower bound report carries the eps of its stage") {
  const Run& run = flat_run();
  const auto reports = apriori_suite(run.data, *run.dom, run.solver->stages(), 1e-9);
  // u >= -eps: margins stay close to eps since the flat solution is >= 0
  int checked = 0;
  for (const auto& rep : reports) {
    if (rep.name.rfind("stage_lower_bound", 0) != 0) continue;
    CHECK(rep.margin > 0.0);
    ++checked;
  }
  CHECK(checked == int(run.solver->stages().size()));
}

TEST_CASE("strict extremum scan") {
  const Run& run = flat_run();
  SUBCASE("converged runs pass") {
    const EstimateReport rep = no_extrema_check(run.ws);
    CHECK(rep.pass);
  }
  SUBCASE("an injected bump is flagged with its location") {
    WeakSolution ws = run.ws;
    const int victim = run.dom->interior_ids[run.dom->interior_ids.size() / 3];
    ws.u[victim] -= 5.0;
    const EstimateReport rep = no_extrema_check(ws);
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.location.empty());
  }
  SUBCASE("constant fields have no strict extrema") {
    WeakSolution ws = run.ws;
    ws.u.assign(ws.u.size(), 2.0);
    CHECK(no_extrema_check(ws).pass);
  }
}

}  // TEST_SUITE
