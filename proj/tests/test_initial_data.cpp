#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "nullflow/initial_data.hpp"

using namespace nullflow;

namespace {

InitialDataSet constant_trace_data(int dim, double tau) {
  InitialDataSet d = make_euclidean(dim);
  d.family = Family::custom;
  d.extrinsic = [dim, tau](const Vec&) {
    Mat3 k;
    for (int i = 0; i < dim; ++i) k(i, i) = tau / dim;
    return k;
  };
  return d;
}

}  // namespace

TEST_SUITE("initial_data") {

TEST_CASE("family evaluators: closed forms") {
  const InitialDataSet schw = make_schwarzschild_isotropic(1.0);
  const Mat3 g = schw.metric(Vec{0.5, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(g(i, j) == doctest::Approx(i == j ? 16.0 : 0.0).epsilon(1e-12));

  const InitialDataSet flat = make_euclidean(3);
  const Mat3 gf = flat.metric(Vec{0.3, -2.0, 1.0});
  CHECK(gf(0, 0) == 1.0);
  CHECK(gf(0, 1) == 0.0);
  CHECK(flat.extrinsic(Vec{1, 1, 1})(2, 2) == 0.0);

  // tangential eigenvalue beta = -4, normal -2 beta = +8 at r = 1
  const InitialDataSet rt = make_radial_traceless(0.0, 4.0);
  const Mat3 K = rt.extrinsic(Vec{1, 0, 0});
  CHECK(K(0, 0) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(K(1, 1) == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(K(2, 2) == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(std::abs(rt.trK(Vec{1, 0, 0})) <= 1e-12);

  CHECK_THROWS_AS(schw.metric(Vec{0, 0, 0}), std::domain_error);
}

TEST_CASE("analytic derivatives match centered differences at order >= 1.9") {
  Rng rng(7);
  for (const InitialDataSet& d :
       {make_schwarzschild_isotropic(1.0), make_radial_traceless(0.5, 2.0)}) {
    double err[2] = {0, 0};
    const double hs[2] = {1e-3, 5e-4};
    for (int trial = 0; trial < 8; ++trial) {
      Vec x{rng.uniform(1.5, 4.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
      const Ten3 dg = d.metric_deriv(x);
      const Ten3 dk = d.extrinsic_deriv(x);
      for (int level = 0; level < 2; ++level) {
        const double h = hs[level];
        for (int k = 0; k < 3; ++k) {
          Vec xp = x, xm = x;
          xp[k] += h;
          xm[k] -= h;
          const Mat3 gp = d.metric(xp), gm = d.metric(xm);
          const Mat3 kp = d.extrinsic(xp), km = d.extrinsic(xm);
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              err[level] = std::max(
                  err[level], std::abs((gp(i, j) - gm(i, j)) / (2 * h) - dg(i, j, k)));
              err[level] = std::max(
                  err[level], std::abs((kp(i, j) - km(i, j)) / (2 * h) - dk(i, j, k)));
            }
        }
      }
    }
    const double order = std::log(err[0] / err[1]) / std::log(hs[0] / hs[1]);
    CHECK(order >= 1.9);
  }
}

TEST_CASE("radial_traceless is trace-free everywhere") {
  const InitialDataSet rt = make_radial_traceless(1.0, 4.0);
  Rng rng(3);
  for (int trial = 0; trial < 32; ++trial) {
    Vec x{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    if (norm(x, 3) < 0.4) continue;
    CHECK(std::abs(rt.trK(x)) <= 1e-12);
  }
  const InitialDataSet rt2 = make_radial_traceless(0.0, 1.5, 2);
  CHECK(std::abs(rt2.trK(Vec{1.2, -0.4, 0})) <= 1e-12);
}

TEST_CASE("decay report: euclidean is exactly flat") {
  const DecayReport rep = validate_asymptotic_flatness(make_euclidean(3), {2, 4, 8});
  for (int row = 0; row < 5; ++row) {
    CHECK(rep.measured[row] == 0.0);
    CHECK(rep.pass[row]);
  }
  CHECK(rep.all_pass);
}

TEST_CASE("decay report: schwarzschild m=1 at radii 4, 8, 16") {
  InitialDataSet schw = make_schwarzschild_isotropic(1.0);
  schw.decay_constant = 3.0;
  const DecayReport rep = validate_asymptotic_flatness(schw, {4, 8, 16});
  // worst case at the smallest radius: r (phi^4 - 1) with phi = 1 + 1/(2 r)
  const double phi4 = std::pow(1.0 + 1.0 / 8.0, 4);
  CHECK(rep.measured[0] == doctest::Approx(4.0 * (phi4 - 1.0)).epsilon(1e-6));
  CHECK(rep.measured[0] > 2.2);
  CHECK(rep.measured[0] < 2.5);
  CHECK(rep.all_pass);
}

TEST_CASE("decay report: radial_traceless extrinsic decay") {
  const InitialDataSet rt = make_radial_traceless(0.0, 4.0);
  const DecayReport rep = validate_asymptotic_flatness(rt, {4, 8, 16});
  // |K| <= 2c/r^3, so r^2 |K| <= 2c / min radius
  CHECK(rep.measured[2] <= 2.0 * 4.0 / 4.0 + 1e-9);
  CHECK(rep.pass[2]);
  CHECK(rep.all_pass);
}

TEST_CASE("decay report: raising the constant never flips pass to fail") {
  InitialDataSet schw = make_schwarzschild_isotropic(2.0);
  std::array<bool, 5> prev{};
  bool first = true;
  for (double C : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    schw.decay_constant = C;
    const DecayReport rep = validate_asymptotic_flatness(schw, {3, 6});
    if (!first)
      for (int row = 0; row < 5; ++row)
        if (prev[row]) CHECK(rep.pass[row]);
    prev = rep.pass;
    first = false;
  }
}

TEST_CASE("decay report: singular metric names the sample point") {
  InitialDataSet bad = make_euclidean(3);
  bad.family = Family::custom;
  bad.metric = [](const Vec& x) {
    Mat3 g;
    const double f = norm(x, 3) - 4.0;  // degenerate on the sampled sphere
    for (int i = 0; i < 3; ++i) g(i, i) = f;
    return g;
  };
  CHECK_THROWS_AS(validate_asymptotic_flatness(bad, {4.0}), InvalidDataError);
}

TEST_CASE("trK sign validation") {
  const auto pts2 = sphere_points(3, 2.0, 32);
  SUBCASE("euclidean: identically zero") {
    const TrKReport rep = validate_trK_sign(make_euclidean(3), pts2);
    CHECK(rep.pass);
    CHECK(rep.worst_value == 0.0);
  }
  SUBCASE("radial_traceless: zero trace") {
    const TrKReport rep = validate_trK_sign(make_radial_traceless(1.0, 4.0), pts2);
    CHECK(rep.pass);
    CHECK(std::abs(rep.worst_value) <= 1e-12);
  }
  SUBCASE("K = -g/r^3 fails at the smallest sampled radius") {
    InitialDataSet bad = make_euclidean(3);
    bad.family = Family::custom;
    bad.extrinsic = [](const Vec& x) {
      const double r = norm(x, 3);
      Mat3 k;
      for (int i = 0; i < 3; ++i) k(i, i) = -1.0 / (r * r * r);
      return k;
    };
    std::vector<Vec> pts = sphere_points(3, 2.0, 16);
    for (const Vec& p : sphere_points(3, 3.0, 16)) pts.push_back(p);
    const TrKReport rep = validate_trK_sign(bad, pts);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_value == doctest::Approx(-3.0 / 8.0).epsilon(1e-9));
    CHECK(norm(rep.worst_point, 3) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("constant positive trace passes") {
    const TrKReport rep = validate_trK_sign(constant_trace_data(3, 0.5), pts2);
    CHECK(rep.pass);
    CHECK(rep.worst_value == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("tabulated grid round trip with interpolant-consistent derivatives") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "nullflow_test_grid.txt";
  const InitialDataSet schw = make_schwarzschild_isotropic(1.0);
  save_tabulated_grid(schw, path.string(), 3, Vec{1.0, 1.0, 1.0}, {7, 7, 7}, 0.25);
  const InitialDataSet tab = load_tabulated_grid(path.string());
  CHECK(tab.dim == 3);
  CHECK(tab.family == Family::tabulated_grid);

  // interpolation stays close to the analytic family
  const Vec x{1.6, 1.7, 1.8};
  const Mat3 ga = schw.metric(x), gt = tab.metric(x);
  for (int i = 0; i < 3; ++i) CHECK(gt(i, i) == doctest::Approx(ga(i, i)).epsilon(2e-3));

  // derivative evaluator equals the derivative of the interpolant (test
  // inside one cell where the interpolant is smooth)
  const Vec y{1.62, 1.71, 1.83};
  const Ten3 dgt = tab.metric_deriv(y);
  const double hfd = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Vec yp = y, ym = y;
    yp[k] += hfd;
    ym[k] -= hfd;
    const Mat3 gp = tab.metric(yp), gm = tab.metric(ym);
    for (int i = 0; i < 3; ++i)
      CHECK((gp(i, i) - gm(i, i)) / (2 * hfd) ==
            doctest::Approx(dgt(i, i, k)).epsilon(1e-5));
  }
  fs::remove(path);
}

TEST_CASE("radial profile table reproduces the analytic family") {
  RadialProfileTable table;
  for (int i = 0; i <= 400; ++i) {
    const double r = 0.5 + i * (12.0 - 0.5) / 400;
    table.r.push_back(r);
    table.g_tan.push_back(1.0);
    table.g_rad.push_back(1.0);
    table.kappa_t.push_back(-4.0 / (r * r * r));
    table.kappa_n.push_back(8.0 / (r * r * r));
  }
  const InitialDataSet prof = make_radial_profile(table, 3);
  const InitialDataSet exact = make_radial_traceless(0.0, 4.0);
  for (double r : {1.0, 2.0, 5.0}) {
    const Vec x{r / std::sqrt(2.0), r / std::sqrt(2.0), 0.0};
    const Mat3 kp = prof.extrinsic(x), ke = exact.extrinsic(x);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(kp(i, j) == doctest::Approx(ke(i, j)).epsilon(1e-5).scale(1.0));
  }
  CHECK(std::abs(prof.trK(Vec{2, 0.5, 0.1})) <= 1e-7);

  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "nullflow_test_profile.txt";
  save_radial_profile(table, path.string());
  const RadialProfileTable back = load_radial_profile(path.string());
  REQUIRE(back.r.size() == table.r.size());
  CHECK(back.kappa_t[100] == table.kappa_t[100]);
  fs::remove(path);
}

}  // TEST_SUITE
