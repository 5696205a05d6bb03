// Asymptotically flat initial data sets (M, g, K) on a single chart
// R^d minus a ball, with built-in analytic families, tabulated variants,
// and the decay / mean-curvature-sign validation used as pipeline gates.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nullflow/core.hpp"

namespace nullflow {

enum class Family {
  euclidean,
  schwarzschild_isotropic,
  radial_traceless,
  radial_profile,
  tabulated_grid,
  custom,
};

std::string family_name(Family f);

struct InvalidDataError : std::runtime_error {
  explicit InvalidDataError(const std::string& what) : std::runtime_error(what) {}
};

// Evaluators are pure functions of the chart point; an InitialDataSet is
// immutable after construction and safe to share across workers.
struct InitialDataSet {
  int dim = 3;  // chart dimension d = n + 1, restricted to {2, 3}
  Family family = Family::custom;
  double mass = 0.0;
  double coefficient = 0.0;
  double decay_constant = 1.0;

  std::function<Mat3(const Vec&)> metric;          // g_ij(x)
  std::function<Ten3(const Vec&)> metric_deriv;    // g_ij,k(x)
  std::function<Mat3(const Vec&)> extrinsic;       // K_ij(x)
  std::function<Ten3(const Vec&)> extrinsic_deriv; // K_ij,k(x)

  int n() const { return dim - 1; }  // surface dimension

  Mat3 metric_inv(const Vec& x) const;
  double sqrt_det_metric(const Vec& x) const;
  double trK(const Vec& x) const;  // g^{ij} K_ij
};

InitialDataSet make_euclidean(int dim);
// g = phi^4 delta with phi = 1 + m/(2|x|), K = 0.
InitialDataSet make_schwarzschild_isotropic(double mass, int dim = 3);
// g = phi^4 delta, K = beta(r) (g - d nu (x) nu) with beta = -c/r^3 and nu the
// g-unit radial covector; trace-free in any d.
InitialDataSet make_radial_traceless(double mass, double c, int dim = 3);

// Tabulated radial profile: columns r, a(r), b(r), kappa_t(r), kappa_n(r) with
//   g = a (delta - x x^T/r^2) + b x x^T/r^2,
//   K = kappa_t a (delta - x x^T/r^2) + kappa_n b x x^T/r^2.
// Cubic-spline interpolation; derivatives are the analytic spline derivatives.
struct RadialProfileTable {
  std::vector<double> r, g_tan, g_rad, kappa_t, kappa_n;
};
InitialDataSet make_radial_profile(const RadialProfileTable& table, int dim = 3);
RadialProfileTable load_radial_profile(const std::string& path);
void save_radial_profile(const RadialProfileTable& table, const std::string& path);

// Tabulated Cartesian grid of g and K (trilinear interpolation; derivatives of
// the interpolant). Columnar text: header "dim shape... spacing origin...",
// then one node per line: x_1..x_d, g upper triangle, K upper triangle.
InitialDataSet load_tabulated_grid(const std::string& path);
void save_tabulated_grid(const InitialDataSet& data, const std::string& path, int dim,
                         const Vec& origin, const std::array<int, 3>& shape, double h);

// ---------------------------------------------------------------------------
// Validation.

struct DecayReport {
  std::vector<double> radii;
  // Rows: g deviation, dg, K, dK, coordinate trace of K.
  std::array<std::string, 5> names;
  std::array<double, 5> exponents;   // n-1, n, n, n+1, (n+3)/2
  std::array<double, 5> measured;    // sup over samples of |x|^p * quantity
  std::array<bool, 5> pass;
  bool all_pass = false;
  double decay_constant = 0.0;
};

DecayReport validate_asymptotic_flatness(const InitialDataSet& data,
                                         const std::vector<double>& radii,
                                         int samples_per_sphere = 128);

struct TrKReport {
  bool pass = false;
  double worst_value = 0.0;
  Vec worst_point{};
};

TrKReport validate_trK_sign(const InitialDataSet& data, const std::vector<Vec>& points,
                            double tol = 1e-12);

// Deterministic sample points on the sphere |x| = r (d = 2: uniform angles,
// d = 3: Fibonacci lattice).
std::vector<Vec> sphere_points(int dim, double r, int count);

}  // namespace nullflow
