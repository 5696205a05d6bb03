// Exact spherically symmetric reference solution: closed-form null expansion,
// trapped-surface root finding, the smooth-flow ODE, and the weak radial
// solution built from the area-plus-bulk profile and its hull rule.
#pragma once

#include <functional>
#include <vector>

#include "nullflow/core.hpp"
#include "nullflow/initial_data.hpp"

namespace nullflow {

struct RadialData {
  int n = 2;  // surface dimension; chart dimension is n + 1
  std::function<double(double)> sqrt_grr;  // sqrt(g_rr)(r)
  std::function<double(double)> area;      // |S_r|
  std::function<double(double)> darea;     // d|S_r|/dr
  std::function<double(double)> kappa_t;   // tangential eigenvalue of K
  std::function<double(double)> kappa_n;   // normal eigenvalue of K
  double r_min = 0.0;                      // profile domain
  double r_max = std::numeric_limits<double>::infinity();

  double H(double r) const { return darea(r) / (area(r) * sqrt_grr(r)); }
  double P(double r) const { return n * kappa_t(r); }
  double theta_plus(double r) const { return H(r) + P(r); }
  double trK(double r) const { return kappa_n(r) + n * kappa_t(r); }

  void check_domain(double r) const {
    if (!(r >= r_min && r <= r_max))
      throw std::domain_error("radial profile evaluated outside its domain");
  }
};

RadialData radial_euclidean(int dim);
RadialData radial_schwarzschild(double mass, int dim = 3);
RadialData radial_traceless_profile(double mass, double c, int dim = 3);
// Flat metric with a smooth tangential bump that drives theta_plus negative on
// an interior band; kappa_n = -n kappa_t keeps trK = 0. Used to exercise
// interior jumps at t > 0.
RadialData radial_theta_dip(int dim, double center, double width, double amplitude);
// Reduce a spherically symmetric InitialDataSet family to its radial profile.
RadialData radial_from_data(const InitialDataSet& data);

struct ThetaSample {
  double H, P, theta_plus;
};
ThetaSample theta_radial(const RadialData& rd, double r);

// Root of theta_plus in [a, b]; requires a sign change.
double mots_radius(const RadialData& rd, double a, double b);

struct SmoothFlowResult {
  std::vector<double> t, r;        // RK4 trajectory r(t)
  bool stalled = false;            // theta_plus hit zero along the path
  double stop_radius = 0.0;
  std::function<double(double)> u; // arrival time by quadrature, u(r(t)) = t
};
SmoothFlowResult smooth_flow_ode(const RadialData& rd, double r0, double t_end,
                                 double dt = 1e-3);

struct JumpInterval {
  double a = 0, b = 0;   // flow jumps instantly from a to b
  double time = 0;       // arrival time of the jump (0 for the initial jump)
  double phi_a = 0, phi_b = 0;
};

struct RadialWeakSolution {
  double r0 = 0, r_max = 0;
  std::vector<JumpInterval> jumps;  // ordered by radius
  std::function<double(double)> phi;
  std::function<double(double)> u;  // arrival time, u(r0) = 0, constant on jumps

  bool in_jump(double r) const {
    for (const auto& j : jumps)
      if (r >= j.a && r <= j.b) return true;
    return false;
  }
};

// Area-plus-bulk profile Phi(rho) = |S_rho| + int_{r0}^{rho} P dV.
std::function<double(double)> make_phi(const RadialData& rd, double r0);

// Weak radial flow on [r0, r_max] with the hull jump rule: from radius a the
// flow jumps to the largest minimiser of Phi on [a, r_max]. Requires trK >= 0.
RadialWeakSolution radial_weak_solution(const RadialData& rd, double r0, double r_max,
                                        int scan_points = 4096);

// Largest argmin of f over the discrete grid {x[i]}, i >= start (ties resolve
// to the largest index). Shared by the hull rule and its brute-force check.
int largest_argmin_from(const std::vector<double>& values, int start);

}  // namespace nullflow
