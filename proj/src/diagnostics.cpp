#include "nullflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nullflow {

namespace {

std::string point_string(const Vec& x, int dim) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < dim; ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

}  // namespace

InteriorBoundConstants interior_bound_constants(int n, double K0, double K1, double R) {
  InteriorBoundConstants c;
  c.lambda = 4.0 * (3.0 * n + (12.0 + 3.0 * n) * K0 * R + n * K1 * R * R);
  c.alpha = 12.0 + 4.0 * n * K0 * R;
  c.bound = c.lambda / (R * (std::sqrt(c.alpha * c.alpha + 2.0 * n * c.lambda) - c.alpha));
  return c;
}

EstimateReport interior_bound_check(const InitialDataSet& data, WeakSolution& ws, int node,
                                    double R) {
  const AnnularDomain& dom = *ws.dom;
  EstimateReport rep;
  rep.name = "interior_null_expansion_bound";
  rep.reference = "interior estimate for H+P on smooth flow regions";
  rep.slack = 10.0 * dom.h;
  rep.location = point_string(dom.nodes[node].x, dom.dim);

  const Vec x0 = dom.nodes[node].x;
  const double grad_tol = ws.grad_tol > 0 ? ws.grad_tol : default_grad_tol(dom);
  const std::vector<double> gn = grid_gradient_norm(dom, data, ws.u);

  double K0 = 0, K1 = 0, boundary_sup = -std::numeric_limits<double>::infinity();
  bool plateau_inside = false;
  std::vector<int> shell;
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
    Vec d;
    for (int a = 0; a < 3; ++a) d[a] = dom.nodes[i].x[a] - x0[a];
    const double dist = norm(d, dom.dim);
    if (dist > R + dom.h) continue;
    const Vec x = dom.nodes[i].x;
    K0 = std::max(K0, largest_abs_eigenvalue_rel(data.extrinsic(x), data.metric(x), dom.dim));
    const Ten3 dK = data.extrinsic_deriv(x);
    for (int i1 = 0; i1 < dom.dim; ++i1)
      for (int j1 = 0; j1 < dom.dim; ++j1)
        for (int k1 = 0; k1 < dom.dim; ++k1) K1 = std::max(K1, std::abs(dK(i1, j1, k1)));
    if (dist <= R && gn[i] <= grad_tol && dom.nodes[i].role == NodeRole::interior)
      plateau_inside = true;
    if (std::abs(dist - R) <= dom.h) shell.push_back(int(i));
  }
  if (plateau_inside) {
    rep.applicable = false;
    rep.pass = true;
    rep.reference += " (plateau meets the ball; estimate not applicable)";
    return rep;
  }
  for (int i : shell) {
    try {
      boundary_sup = std::max(boundary_sup, levelset_H_P(dom, data, ws.u, i).theta_plus);
    } catch (const DegenerateGradientError&) {
    }
  }
  const InteriorBoundConstants c =
      interior_bound_constants(data.n(), K0, K1, R);
  double lhs;
  try {
    lhs = levelset_H_P(dom, data, ws.u, node).theta_plus;
  } catch (const DegenerateGradientError&) {
    rep.applicable = false;
    rep.pass = true;
    rep.reference += " (degenerate gradient at the base point)";
    return rep;
  }
  rep.lhs = lhs;
  rep.rhs = std::max(boundary_sup, c.bound);
  rep.margin = rep.rhs - rep.lhs;
  rep.pass = rep.margin >= -rep.slack;
  return rep;
}

MonotonicityReport monotonicity_check(WeakSolution& ws, const InitialDataSet& data,
                                      const std::vector<double>& t_samples) {
  MonotonicityReport rep;
  if (t_samples.size() < 3) return rep;
  rep.rows = diagnostics_table(ws, data, t_samples);
  rep.empty = rep.rows.empty();
  for (std::size_t k = 1; k + 1 < rep.rows.size(); ++k)
    if (!rep.rows[k].jump_flag && rep.rows[k].area > 0)
      rep.max_rel_residual =
          std::max(rep.max_rel_residual, std::abs(rep.rows[k].monotonicity_residual));
  // integrated form: (A e^{-t})' = -e^{-t} (bulk rate), so
  // A e^{-t} - A0 e^{-t0} + int e^{-s} dB vanishes along the flow
  std::size_t base = rep.rows.size();
  for (std::size_t k = 0; k < rep.rows.size(); ++k)
    if (rep.rows[k].area > 0 && !rep.rows[k].jump_flag) {
      base = k;
      break;
    }
  if (base + 1 < rep.rows.size()) {
    const double ref = rep.rows[base].area * std::exp(-rep.rows[base].t);
    double acc = 0;
    for (std::size_t k = base + 1; k < rep.rows.size(); ++k) {
      acc += 0.5 *
             (std::exp(-rep.rows[k - 1].t) + std::exp(-rep.rows[k].t)) *
             (rep.rows[k].bulk_P - rep.rows[k - 1].bulk_P);
      if (rep.rows[k].jump_flag || !(rep.rows[k].area > 0)) continue;
      const double lhs = rep.rows[k].area * std::exp(-rep.rows[k].t);
      rep.integrated_max_rel_residual =
          std::max(rep.integrated_max_rel_residual, std::abs(lhs - ref + acc) / lhs);
    }
  }
  return rep;
}

namespace {

// per-stage estimate battery
void stage_reports(const InitialDataSet& data, const AnnularDomain& dom,
                   const StageRecord& st, double newton_tol,
                   std::vector<EstimateReport>* out) {
  const double eps = st.eps, s = st.s;
  std::ostringstream tag;
  tag << " [eps=" << eps << ", s=" << s << "]";

  // (a) u >= -eps; the discrete comparison holds to O(h) like the rest of
  // the suite (the flux stencil is not an exact M-matrix)
  {
    EstimateReport r;
    r.name = "stage_lower_bound" + tag.str();
    r.reference = "regularized solutions stay above -eps";
    double umin = std::numeric_limits<double>::infinity();
    int where = 0;
    for (std::size_t i = 0; i < st.u.size(); ++i)
      if (st.u[i] < umin) {
        umin = st.u[i];
        where = int(i);
      }
    r.lhs = umin;
    r.rhs = -eps;
    r.margin = r.lhs - r.rhs;
    r.slack = 10.0 * newton_tol + 0.2 * dom.h;
    r.pass = r.margin >= -r.slack;
    r.location = point_string(dom.nodes[where].x, dom.dim);
    out->push_back(std::move(r));
  }
  // (b) u >= v + (s-1)(L-2) - 2 where v = alpha log r >= 0
  {
    EstimateReport r;
    r.name = "stage_outer_comparison" + tag.str();
    r.reference = "log-barrier comparison from below";
    r.slack = 10.0 * dom.h;
    double worst = std::numeric_limits<double>::infinity();
    int where = -1;
    for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
      const double rad = norm(dom.nodes[i].x, dom.dim);
      if (rad < 1.0) continue;
      const double v = dom.alpha_sub * std::log(rad);
      if (v < 0.0 || v > dom.L) continue;
      const double gap = st.u[i] - (v + (s - 1.0) * (dom.L - 2.0) - 2.0);
      if (gap < worst) {
        worst = gap;
        where = int(i);
      }
    }
    r.applicable = where >= 0;
    r.lhs = worst;
    r.rhs = 0.0;
    r.margin = worst;
    r.pass = !r.applicable || r.margin >= -r.slack;
    if (where >= 0) r.location = point_string(dom.nodes[where].x, dom.dim);
    out->push_back(std::move(r));
  }
  // (c) boundary gradient at the inner boundary
  {
    EstimateReport r;
    r.name = "stage_inner_boundary_gradient" + tag.str();
    r.reference = "inner boundary gradient bound H_+ + eps + n|K|";
    double H0 = 0.0;
    for (const Vec& p : sphere_points(dom.dim, dom.inner_radius, 32))
      H0 = std::max(H0, sphere_mean_curvature(data, p));
    double K0 = 0.0;
    const int stride = std::max<std::size_t>(1, dom.nodes.size() / 2048);
    for (std::size_t i = 0; i < dom.nodes.size(); i += stride) {
      const Vec x = dom.nodes[i].x;
      K0 = std::max(K0, largest_abs_eigenvalue_rel(data.extrinsic(x), data.metric(x),
                                                   dom.dim));
    }
    double sup = 0.0;
    int where = -1;
    const std::vector<double> gn = grid_gradient_norm(dom, data, st.u);
    for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
      if (dom.nodes[i].role != NodeRole::interior) continue;
      bool near_inner = false;
      for (int a = 0; a < dom.dim && !near_inner; ++a)
        for (int sg : {-1, +1}) {
          const int nb = dom.neighbor(int(i), a, sg);
          if (nb >= 0 && dom.nodes[nb].role == NodeRole::inner_boundary) {
            near_inner = true;
            break;
          }
        }
      if (!near_inner) continue;
      if (gn[i] > sup) {
        sup = gn[i];
        where = int(i);
      }
    }
    r.applicable = where >= 0;
    r.lhs = sup;
    r.rhs = std::max(0.0, H0) + eps + data.n() * K0;
    r.slack = 10.0 * dom.h * (1.0 + r.rhs);
    r.margin = r.rhs - r.lhs;
    r.pass = !r.applicable || r.margin >= -r.slack;
    if (where >= 0) r.location = point_string(dom.nodes[where].x, dom.dim);
    out->push_back(std::move(r));
  }
  // (d) interior gradient: sup over a ball vs shell sup + eps + C
  {
    EstimateReport r;
    r.name = "stage_interior_gradient" + tag.str();
    r.reference = "interior gradient bound from the translating-graph estimate";
    r.slack = 10.0 * dom.h;
    const std::vector<double> gn = grid_gradient_norm(dom, data, st.u);
    double worst = std::numeric_limits<double>::infinity();
    int where = -1;
    const int stride = std::max<std::size_t>(1, dom.nodes.size() / 128);
    for (std::size_t i = 0; i < dom.nodes.size(); i += stride) {
      if (dom.nodes[i].role != NodeRole::interior) continue;
      const Vec x0 = dom.nodes[i].x;
      const double rad = norm(x0, dom.dim);
      const double R = std::min(1.0, std::min(rad - dom.inner_radius,
                                              dom.outer_radius - rad) -
                                         dom.h);
      if (R < 4 * dom.h) continue;
      double K0 = 0, K1 = 0, shell_sup = 0;
      bool shell_seen = false;
      for (std::size_t j = 0; j < dom.nodes.size(); ++j) {
        Vec d;
        for (int a = 0; a < 3; ++a) d[a] = dom.nodes[j].x[a] - x0[a];
        const double dist = norm(d, dom.dim);
        if (dist > R + dom.h) continue;
        const Vec x = dom.nodes[j].x;
        K0 = std::max(K0,
                      largest_abs_eigenvalue_rel(data.extrinsic(x), data.metric(x), dom.dim));
        const Ten3 dK = data.extrinsic_deriv(x);
        for (int i1 = 0; i1 < dom.dim; ++i1)
          for (int j1 = 0; j1 < dom.dim; ++j1)
            for (int k1 = 0; k1 < dom.dim; ++k1)
              K1 = std::max(K1, std::abs(dK(i1, j1, k1)));
        if (std::abs(dist - R) <= dom.h) {
          shell_sup = std::max(shell_sup, gn[j]);
          shell_seen = true;
        }
      }
      if (!shell_seen) continue;
      const InteriorBoundConstants c = interior_bound_constants(data.n(), K0, K1, R);
      const double gap = (shell_sup + eps + c.bound) - gn[i];
      if (gap < worst) {
        worst = gap;
        where = int(i);
      }
    }
    r.applicable = where >= 0;
    r.lhs = r.applicable ? -worst : 0.0;  // excess over the bound, if any
    r.rhs = 0.0;
    r.margin = r.applicable ? worst : 0.0;
    r.pass = !r.applicable || r.margin >= -r.slack;
    if (where >= 0) r.location = point_string(dom.nodes[where].x, dom.dim);
    out->push_back(std::move(r));
  }
  // (e) u <= L + m d0 with m measured
  {
    EstimateReport r;
    r.name = "stage_upper_bound" + tag.str();
    r.reference = "linear supersolution bound L + m d0";
    double K0 = 0, trK = 0, Hneg = 0;
    const int stride = std::max<std::size_t>(1, dom.nodes.size() / 2048);
    for (std::size_t i = 0; i < dom.nodes.size(); i += stride) {
      const Vec x = dom.nodes[i].x;
      K0 = std::max(K0,
                    largest_abs_eigenvalue_rel(data.extrinsic(x), data.metric(x), dom.dim));
      trK = std::max(trK, std::abs(data.trK(x)));
      Hneg = std::max(Hneg, -sphere_mean_curvature(data, x));
    }
    const double m = std::max(0.0, Hneg) + 2.0 * trK + K0;
    const double d0 = dom.outer_radius - dom.inner_radius;
    double umax = -std::numeric_limits<double>::infinity();
    int where = 0;
    for (std::size_t i = 0; i < st.u.size(); ++i)
      if (st.u[i] > umax) {
        umax = st.u[i];
        where = int(i);
      }
    r.lhs = umax;
    r.rhs = dom.L + m * d0;
    r.slack = 10.0 * dom.h;
    r.margin = r.rhs - r.lhs;
    r.pass = r.margin >= -r.slack;
    r.location = point_string(dom.nodes[where].x, dom.dim);
    out->push_back(std::move(r));
  }
}

}  // namespace

std::vector<EstimateReport> apriori_suite(const InitialDataSet& data,
                                          const AnnularDomain& dom,
                                          const std::vector<StageRecord>& stages,
                                          double newton_tol) {
  std::vector<EstimateReport> out;
  for (const auto& st : stages) stage_reports(data, dom, st, newton_tol, &out);
  return out;
}

EstimateReport no_extrema_check(const WeakSolution& ws) {
  EstimateReport rep;
  rep.name = "no_strict_interior_extrema";
  rep.reference = "arrival-time functions admit no strict interior extrema";
  const ExtremumScan scan = scan_strict_extrema(*ws.dom, ws.u);
  rep.pass = scan.pass;
  rep.margin = scan.pass ? 0.0 : -1.0;
  if (!scan.pass)
    rep.location = point_string(ws.dom->nodes[scan.witness].x, ws.dom->dim) + " (node " +
                   std::to_string(scan.witness) + ")";
  return rep;
}

}  // namespace nullflow
