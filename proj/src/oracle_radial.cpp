#include "nullflow/oracle_radial.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace nullflow {

namespace {

double unit_sphere_area(int n) {
  // |S^n| for the unit n-sphere: 2 pi (n=1), 4 pi (n=2).
  return (n == 1) ? 2 * kPi : 4 * kPi;
}

// Value-captured copies of the profile functions, so closures built from a
// RadialData stay valid after the struct goes out of scope.
struct ProfileFns {
  int n;
  std::function<double(double)> sqrt_grr, area, darea, kappa_t;

  double theta(double r) const {
    return darea(r) / (area(r) * sqrt_grr(r)) + n * kappa_t(r);
  }
  double P(double r) const { return n * kappa_t(r); }
  double arrival_integrand(double r) const { return theta(r) * sqrt_grr(r); }
  double bulk_integrand(double r) const { return P(r) * sqrt_grr(r) * area(r); }
};

ProfileFns capture(const RadialData& rd) {
  return {rd.n, rd.sqrt_grr, rd.area, rd.darea, rd.kappa_t};
}

}  // namespace

RadialData radial_euclidean(int dim) {
  RadialData rd;
  rd.n = dim - 1;
  const double c = unit_sphere_area(rd.n);
  const int n = rd.n;
  rd.sqrt_grr = [](double) { return 1.0; };
  rd.area = [c, n](double r) { return c * std::pow(r, n); };
  rd.darea = [c, n](double r) { return c * n * std::pow(r, n - 1); };
  rd.kappa_t = [](double) { return 0.0; };
  rd.kappa_n = [](double) { return 0.0; };
  rd.r_min = 0.0;
  return rd;
}

RadialData radial_schwarzschild(double mass, int dim) {
  RadialData rd = radial_euclidean(dim);
  const int n = rd.n;
  const double c = unit_sphere_area(n);
  auto phi = [mass](double r) { return 1.0 + mass / (2 * r); };
  auto dphi = [mass](double r) { return -mass / (2 * r * r); };
  rd.sqrt_grr = [phi](double r) { return phi(r) * phi(r); };
  rd.area = [c, n, phi](double r) { return c * std::pow(r, n) * std::pow(phi(r), 2 * n); };
  rd.darea = [c, n, phi, dphi](double r) {
    return c * std::pow(r, n - 1) * std::pow(phi(r), 2 * n - 1) *
           (n * phi(r) + 2 * n * r * dphi(r));
  };
  rd.r_min = 1e-6 * std::max(1.0, mass);
  return rd;
}

RadialData radial_traceless_profile(double mass, double c, int dim) {
  RadialData rd = radial_schwarzschild(mass, dim);
  const int n = rd.n;
  rd.kappa_t = [c](double r) { return -c / (r * r * r); };
  rd.kappa_n = [c, n](double r) { return n * c / (r * r * r); };
  return rd;
}

RadialData radial_theta_dip(int dim, double center, double width, double amplitude) {
  RadialData rd = radial_euclidean(dim);
  const int n = rd.n;
  // Quartic bump (1 - xi^2)^2 on |xi| < 1; kappa_n = -n kappa_t keeps trK = 0.
  auto kt = [center, width, amplitude](double r) {
    const double xi = (r - center) / width;
    if (std::abs(xi) >= 1.0) return 0.0;
    const double b = (1 - xi * xi) * (1 - xi * xi);
    return -amplitude * b / r;
  };
  rd.kappa_t = kt;
  rd.kappa_n = [kt, n](double r) { return -n * kt(r); };
  return rd;
}

RadialData radial_from_data(const InitialDataSet& data) {
  switch (data.family) {
    case Family::euclidean:
      return radial_euclidean(data.dim);
    case Family::schwarzschild_isotropic:
      return radial_schwarzschild(data.mass, data.dim);
    case Family::radial_traceless:
      return radial_traceless_profile(data.mass, data.coefficient, data.dim);
    case Family::radial_profile: {
      // Sample the evaluators along the x-axis; exact for this family.
      RadialData rd;
      rd.n = data.n();
      const double c = unit_sphere_area(rd.n);
      const int n = rd.n;
      auto metric = data.metric;
      auto dmetric = data.metric_deriv;
      auto extr = data.extrinsic;
      rd.sqrt_grr = [metric](double r) {
        return std::sqrt(metric(Vec{r, 0, 0})(0, 0));
      };
      rd.area = [metric, c, n](double r) {
        return c * std::pow(r, n) * std::pow(metric(Vec{r, 0, 0})(1, 1), n / 2.0);
      };
      rd.darea = [metric, dmetric, c, n](double r) {
        const Vec x{r, 0, 0};
        const double a = metric(x)(1, 1);
        const double da = dmetric(x)(1, 1, 0);
        return c * std::pow(r, n - 1) * std::pow(a, n / 2.0 - 1) * (n * a + 0.5 * n * r * da);
      };
      rd.kappa_t = [metric, extr](double r) {
        const Vec x{r, 0, 0};
        return extr(x)(1, 1) / metric(x)(1, 1);
      };
      rd.kappa_n = [metric, extr](double r) {
        const Vec x{r, 0, 0};
        return extr(x)(0, 0) / metric(x)(0, 0);
      };
      rd.r_min = 1e-12;
      return rd;
    }
    default:
      throw std::invalid_argument("radial_from_data: family is not spherically symmetric");
  }
}

ThetaSample theta_radial(const RadialData& rd, double r) {
  rd.check_domain(r);
  return {rd.H(r), rd.P(r), rd.theta_plus(r)};
}

double mots_radius(const RadialData& rd, double a, double b) {
  rd.check_domain(a);
  rd.check_domain(b);
  const double fa = rd.theta_plus(a), fb = rd.theta_plus(b);
  if (fa * fb > 0)
    throw std::runtime_error("mots_radius: theta_plus has no sign change in bracket");
  const ProfileFns f = capture(rd);
  return brent_root([f](double r) { return f.theta(r); }, a, b, 1e-12);
}

SmoothFlowResult smooth_flow_ode(const RadialData& rd, double r0, double t_end, double dt) {
  const ProfileFns f = capture(rd);
  SmoothFlowResult res;
  res.t.push_back(0.0);
  res.r.push_back(r0);
  auto speed = [f](double r) { return 1.0 / (f.theta(r) * f.sqrt_grr(r)); };
  if (rd.theta_plus(r0) <= 0) {
    res.stalled = true;
    res.stop_radius = r0;
  } else {
    double t = 0, r = r0;
    while (t < t_end - 1e-15) {
      const double step = std::min(dt, t_end - t);
      const double k1 = speed(r);
      const double k2 = speed(r + 0.5 * step * k1);
      const double k3 = speed(r + 0.5 * step * k2);
      const double k4 = speed(r + step * k3);
      const double rn = r + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      if (!(rn > r) || f.theta(rn) <= 0) {
        res.stalled = true;
        res.stop_radius = r;
        break;
      }
      r = rn;
      t += step;
      res.t.push_back(t);
      res.r.push_back(r);
    }
    res.stop_radius = r;
  }
  res.u = [f, r0](double r) {
    return integrate([f](double s) { return f.arrival_integrand(s); }, r0, r, 1e-12);
  };
  return res;
}

std::function<double(double)> make_phi(const RadialData& rd, double r0) {
  const ProfileFns f = capture(rd);
  return [f, r0](double rho) {
    const double bulk =
        integrate([f](double s) { return f.bulk_integrand(s); }, r0, rho, 1e-11);
    return f.area(rho) + bulk;
  };
}

int largest_argmin_from(const std::vector<double>& values, int start) {
  int best = start;
  for (int i = start; i < int(values.size()); ++i)
    if (values[i] <= values[best]) best = i;
  return best;
}

RadialWeakSolution radial_weak_solution(const RadialData& rd, double r0, double r_max,
                                        int scan_points) {
  rd.check_domain(r0);
  rd.check_domain(r_max);
  const ProfileFns f = capture(rd);
  RadialWeakSolution ws;
  ws.r0 = r0;
  ws.r_max = r_max;

  // Phi on a scan grid (cumulative quadrature), plus the exact profile for
  // Brent refinement of jump endpoints.
  const int m = scan_points;
  std::vector<double> grid(m + 1), phiv(m + 1);
  const double dr = (r_max - r0) / m;
  double acc = 0.0;
  for (int i = 0; i <= m; ++i) {
    const double r = r0 + i * dr;
    grid[i] = r;
    if (i > 0)
      acc += integrate([f](double s) { return f.bulk_integrand(s); }, grid[i - 1], r, 1e-12);
    phiv[i] = f.area(r) + acc;
  }
  auto phi_exact = make_phi(rd, r0);
  ws.phi = phi_exact;

  const double scale = std::max({1.0, std::abs(phiv[0]), std::abs(phiv[m])});
  const double tol = 1e-9 * scale;

  if (largest_argmin_from(phiv, 0) == m && phiv[m] < phiv[0] - tol)
    throw std::runtime_error(
        "radial_weak_solution: Phi minimiser sits at r_max; enlarge the window");

  // Suffix minima define the optimising set {Phi = future min}.
  std::vector<double> suffix(m + 1);
  suffix[m] = phiv[m];
  for (int i = m - 1; i >= 0; --i) suffix[i] = std::min(phiv[i], suffix[i + 1]);

  std::vector<JumpInterval> jumps;
  int i = 0;
  // Initial jump: land at the largest minimiser of Phi on [r0, r_max]. At an
  // interior minimum the landing is the outermost theta_plus root, which
  // Brent refines far below grid resolution.
  {
    const int target = largest_argmin_from(phiv, 0);
    if (target > 0) {
      double b = grid[target];
      const int lo = std::max(0, target - 1), hi = std::min(m, target + 1);
      if (f.theta(grid[lo]) * f.theta(grid[hi]) < 0)
        b = brent_root([f](double r) { return f.theta(r); }, grid[lo], grid[hi], 1e-13);
      JumpInterval j;
      j.a = r0;
      j.b = b;
      j.time = 0.0;
      j.phi_a = phi_exact(r0);
      j.phi_b = phi_exact(b);
      if (j.b > j.a + 1e-12) jumps.push_back(j);
      while (i < m && grid[i] < b) ++i;
    }
  }
  // Interior jumps: open where Phi exceeds its future min, close at the
  // matching equal-Phi recovery radius.
  while (i < m) {
    if (phiv[i] <= suffix[i] + tol) {
      ++i;
      continue;
    }
    const double level = suffix[i];
    double a = grid[std::max(0, i - 1)];
    if (i > 0) {
      const double fa = phi_exact(grid[i - 1]) - level, fb = phi_exact(grid[i]) - level;
      if (fa * fb < 0)
        a = brent_root([phi_exact, level](double r) { return phi_exact(r) - level; },
                       grid[i - 1], grid[i], 1e-12);
    }
    int ib = i;
    while (ib < m && phiv[ib] > suffix[ib] + tol) ++ib;
    double b = grid[ib];
    if (ib > 0) {
      const double fa2 = phi_exact(grid[ib - 1]) - level, fb2 = phi_exact(grid[ib]) - level;
      if (fa2 * fb2 < 0)
        b = brent_root([phi_exact, level](double r) { return phi_exact(r) - level; },
                       grid[ib - 1], grid[ib], 1e-12);
    }
    JumpInterval j;
    j.a = a;
    j.b = b;
    j.phi_a = phi_exact(a);
    j.phi_b = phi_exact(b);
    jumps.push_back(j);
    i = std::max(ib, i + 1);
  }

  // Arrival times: accumulate theta_plus sqrt(g_rr) over smooth segments.
  auto segs_r = std::make_shared<std::vector<double>>();
  auto segs_t = std::make_shared<std::vector<double>>();
  {
    double t = 0.0, r = r0;
    std::size_t k = 0;
    if (!jumps.empty() && jumps[0].a <= r0 + 1e-15) {
      r = jumps[0].b;
      k = 1;
    }
    segs_r->push_back(r);
    segs_t->push_back(t);
    for (; k < jumps.size(); ++k) {
      auto& j = jumps[k];
      t += integrate([f](double s) { return f.arrival_integrand(s); }, r, j.a, 1e-11);
      j.time = t;
      r = j.b;
      segs_r->push_back(r);
      segs_t->push_back(t);
    }
  }
  ws.jumps = jumps;
  auto jumps_copy = std::make_shared<std::vector<JumpInterval>>(jumps);
  ws.u = [f, r0, segs_r, segs_t, jumps_copy](double r) {
    if (r <= r0) return 0.0;
    for (const auto& j : *jumps_copy)
      if (r >= j.a - 1e-15 && r <= j.b) {
        r = j.a;
        break;
      }
    std::size_t k = 0;
    for (std::size_t s = 0; s < segs_r->size(); ++s)
      if ((*segs_r)[s] <= r + 1e-12) k = s;
    const double base_r = (*segs_r)[k], base_t = (*segs_t)[k];
    if (r <= base_r) return base_t;
    return base_t +
           integrate([f](double s) { return f.arrival_integrand(s); }, base_r, r, 1e-11);
  };
  return ws;
}

}  // namespace nullflow
