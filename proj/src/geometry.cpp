#include "nullflow/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace nullflow {

Ten3 christoffel(const InitialDataSet& data, const Vec& x) {
  const Mat3 gi = data.metric_inv(x);
  const Ten3 dg = data.metric_deriv(x);
  Ten3 gamma;
  for (int k = 0; k < data.dim; ++k)
    for (int i = 0; i < data.dim; ++i)
      for (int j = 0; j < data.dim; ++j) {
        double s = 0;
        for (int l = 0; l < data.dim; ++l)
          s += gi(k, l) * (dg(i, l, j) + dg(j, l, i) - dg(i, j, l));
        gamma(k, i, j) = 0.5 * s;
      }
  return gamma;
}

namespace {

Vec raise_index(const Mat3& ginv, const Vec& w, int dim) {
  Vec v{};
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) v[i] += ginv(i, j) * w[j];
  return v;
}

// Trace of the covariant Hessian against the tangential projector.
double projected_hessian_trace(const InitialDataSet& data, const Vec& x, const Vec& grad,
                               const Mat3& hess, const Mat3& ginv, const Vec& nu_up,
                               double grad_norm) {
  const Ten3 gamma = christoffel(data, x);
  double H = 0;
  for (int i = 0; i < data.dim; ++i)
    for (int j = 0; j < data.dim; ++j) {
      double cov = hess(i, j);
      for (int k = 0; k < data.dim; ++k) cov -= gamma(k, i, j) * grad[k];
      const double proj = ginv(i, j) - nu_up[i] * nu_up[j];
      H += proj * cov;
    }
  return H / grad_norm;
}

}  // namespace

ThetaValues levelset_theta_analytic(const InitialDataSet& data, const Vec& x, const Vec& grad,
                                    const Mat3& hess, double grad_floor) {
  const Mat3 ginv = data.metric_inv(x);
  const double gn = covector_norm(grad, ginv, data.dim);
  if (gn < grad_floor) throw DegenerateGradientError("level set gradient below floor");
  Vec nu_cov;
  for (int i = 0; i < data.dim; ++i) nu_cov[i] = grad[i] / gn;
  const Vec nu_up = raise_index(ginv, nu_cov, data.dim);
  ThetaValues tv;
  tv.normal = nu_up;
  tv.H = projected_hessian_trace(data, x, grad, hess, ginv, nu_up, gn);
  tv.P = 0;
  const Mat3 K = data.extrinsic(x);
  for (int i = 0; i < data.dim; ++i)
    for (int j = 0; j < data.dim; ++j)
      tv.P += (ginv(i, j) - nu_up[i] * nu_up[j]) * K(i, j);
  tv.theta_plus = tv.H + tv.P;
  return tv;
}

double sphere_mean_curvature(const InitialDataSet& data, const Vec& x) {
  const double r = norm(x, data.dim);
  Vec grad;
  Mat3 hess;
  for (int i = 0; i < data.dim; ++i) {
    grad[i] = x[i] / r;
    for (int j = 0; j < data.dim; ++j)
      hess(i, j) = (i == j ? 1.0 : 0.0) / r - x[i] * x[j] / (r * r * r);
  }
  return levelset_theta_analytic(data, x, grad, hess).H;
}

double projector_trace_K(const InitialDataSet& data, const Vec& x, const Vec& unit_normal) {
  const Mat3 ginv = data.metric_inv(x);
  const Mat3 K = data.extrinsic(x);
  double p = 0;
  for (int i = 0; i < data.dim; ++i)
    for (int j = 0; j < data.dim; ++j)
      p += (ginv(i, j) - unit_normal[i] * unit_normal[j]) * K(i, j);
  return p;
}

// ---------------------------------------------------------------------------
// Discrete field operators.

namespace {

// One axis derivative at a node: centered where both neighbors exist,
// one-sided otherwise, 0 when isolated.
double axis_diff(const AnnularDomain& dom, const std::vector<double>& u, int node, int axis) {
  const int p = dom.neighbor(node, axis, +1);
  const int m = dom.neighbor(node, axis, -1);
  if (p >= 0 && m >= 0) return (u[p] - u[m]) / (2 * dom.h);
  if (p >= 0) return (u[p] - u[node]) / dom.h;
  if (m >= 0) return (u[node] - u[m]) / dom.h;
  return 0.0;
}

struct RadialPoint {
  double sqrt_grr, area, darea, kt, kn;
};

RadialPoint radial_reduction_at(const InitialDataSet& data, double r) {
  const Vec x{r, 0, 0};
  const int n = data.n();
  const double c = (n == 1) ? 2 * kPi : 4 * kPi;
  const Mat3 g = data.metric(x);
  const Ten3 dg = data.metric_deriv(x);
  const Mat3 K = data.extrinsic(x);
  RadialPoint rp;
  rp.sqrt_grr = std::sqrt(g(0, 0));
  const double a = g(1, 1), da = dg(1, 1, 0);
  rp.area = c * std::pow(r, n) * std::pow(a, n / 2.0);
  rp.darea = c * std::pow(r, n - 1) * std::pow(a, n / 2.0 - 1) * (n * a + 0.5 * n * r * da);
  rp.kt = K(1, 1) / a;
  rp.kn = K(0, 0) / g(0, 0);
  return rp;
}

ThetaValues radial_levelset_H_P(const AnnularDomain& dom, const InitialDataSet& data,
                                const std::vector<double>& u, int node, double grad_floor) {
  const double r = dom.nodes[node].x[0];
  const RadialPoint rp = radial_reduction_at(data, r);
  const double du = axis_diff(dom, u, node, 0);
  const double gn = std::abs(du) / rp.sqrt_grr;
  if (gn < grad_floor) throw DegenerateGradientError("level set gradient below floor");
  const double sign = du > 0 ? 1.0 : -1.0;
  ThetaValues tv;
  tv.H = sign * rp.darea / (rp.sqrt_grr * rp.area);
  tv.P = data.n() * rp.kt;
  tv.theta_plus = tv.H + tv.P;
  tv.normal = Vec{sign / rp.sqrt_grr, 0, 0};
  return tv;
}

}  // namespace

Vec grid_gradient(const AnnularDomain& dom, const std::vector<double>& u, int node) {
  Vec g{};
  for (int a = 0; a < (dom.kind == GridKind::radial ? 1 : dom.dim); ++a)
    g[a] = axis_diff(dom, u, node, a);
  return g;
}

std::vector<double> grid_gradient_norm(const AnnularDomain& dom, const InitialDataSet& data,
                                       const std::vector<double>& u) {
  std::vector<double> out(dom.nodes.size(), 0.0);
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
    const Vec du = grid_gradient(dom, u, int(i));
    if (dom.kind == GridKind::radial) {
      const RadialPoint rp = radial_reduction_at(data, dom.nodes[i].x[0]);
      out[i] = std::abs(du[0]) / rp.sqrt_grr;
    } else {
      out[i] = covector_norm(du, data.metric_inv(dom.nodes[i].x), dom.dim);
    }
  }
  return out;
}

ThetaValues levelset_H_P(const AnnularDomain& dom, const InitialDataSet& data,
                         const std::vector<double>& u, int node, double grad_floor) {
  if (dom.kind == GridKind::radial)
    return radial_levelset_H_P(dom, data, u, node, grad_floor);

  const Vec x = dom.nodes[node].x;
  const Mat3 ginv = data.metric_inv(x);
  const Vec du = grid_gradient(dom, u, node);
  const double gn = covector_norm(du, ginv, dom.dim);
  if (gn < grad_floor) throw DegenerateGradientError("level set gradient below floor");

  // nu^i at a node, raised with the local inverse metric.
  auto nu_up_at = [&](int m) -> std::optional<Vec> {
    const Vec dum = grid_gradient(dom, u, m);
    const Mat3 gim = data.metric_inv(dom.nodes[m].x);
    const double nm = covector_norm(dum, gim, dom.dim);
    if (nm < grad_floor) return std::nullopt;
    Vec up = raise_index(gim, dum, dom.dim);
    for (int i = 0; i < dom.dim; ++i) up[i] /= nm;
    return up;
  };
  const Vec nu_center = *nu_up_at(node);

  double divergence = 0;
  for (int a = 0; a < dom.dim; ++a) {
    const int p = dom.neighbor(node, a, +1);
    const int m = dom.neighbor(node, a, -1);
    const auto np = p >= 0 ? nu_up_at(p) : std::nullopt;
    const auto nm = m >= 0 ? nu_up_at(m) : std::nullopt;
    if (np && nm)
      divergence += ((*np)[a] - (*nm)[a]) / (2 * dom.h);
    else if (np)
      divergence += ((*np)[a] - nu_center[a]) / dom.h;
    else if (nm)
      divergence += (nu_center[a] - (*nm)[a]) / dom.h;
  }
  // Gamma^i_{ik} nu^k = nu^k d_k log sqrt(det g)
  const Ten3 dg = data.metric_deriv(x);
  for (int k = 0; k < dom.dim; ++k) {
    double tr = 0;
    for (int i = 0; i < dom.dim; ++i)
      for (int l = 0; l < dom.dim; ++l) tr += ginv(i, l) * dg(i, l, k);
    divergence += 0.5 * tr * nu_center[k];
  }

  ThetaValues tv;
  tv.H = divergence;
  tv.normal = nu_center;
  tv.P = 0;
  const Mat3 K = data.extrinsic(x);
  for (int i = 0; i < dom.dim; ++i)
    for (int j = 0; j < dom.dim; ++j)
      tv.P += (ginv(i, j) - nu_center[i] * nu_center[j]) * K(i, j);
  tv.theta_plus = tv.H + tv.P;
  return tv;
}

double residual_levelset(const AnnularDomain& dom, const InitialDataSet& data,
                         const std::vector<double>& u, int node, double grad_floor) {
  const ThetaValues tv = levelset_H_P(dom, data, u, node, grad_floor);
  double gn;
  if (dom.kind == GridKind::radial) {
    const RadialPoint rp = radial_reduction_at(data, dom.nodes[node].x[0]);
    gn = std::abs(axis_diff(dom, u, node, 0)) / rp.sqrt_grr;
  } else {
    gn = covector_norm(grid_gradient(dom, u, node), data.metric_inv(dom.nodes[node].x),
                       dom.dim);
  }
  return tv.theta_plus - gn;
}

// ---------------------------------------------------------------------------
// MOTS graph operator.

double residual_mots(const InitialDataSet& data, const GraphFunction& g, int node) {
  const AnnularDomain& dom = *g.dom;
  if (dom.kind == GridKind::radial) {
    const double r = dom.nodes[node].x[0];
    const RadialPoint rp = radial_reduction_at(data, r);
    auto F = [&](int nid_a, int nid_b) {  // face flux between adjacent nodes
      const double rm = 0.5 * (dom.nodes[nid_a].x[0] + dom.nodes[nid_b].x[0]);
      const RadialPoint rf = radial_reduction_at(data, rm);
      const double dw = (g.w[nid_b] - g.w[nid_a]) / dom.h;
      const double s = std::sqrt(1.0 + dw * dw / (rf.sqrt_grr * rf.sqrt_grr));
      return rf.area * dw / (rf.sqrt_grr * s);
    };
    const int p = dom.neighbor(node, 0, +1), m = dom.neighbor(node, 0, -1);
    if (p < 0 || m < 0 || !g.defined[p] || !g.defined[m])
      throw std::runtime_error("residual_mots: stencil leaves the graph patch");
    const double divergence =
        (F(node, p) - F(m, node)) / (dom.h * rp.sqrt_grr * rp.area);
    const double dw = (g.w[p] - g.w[m]) / (2 * dom.h);
    const double grr = rp.sqrt_grr * rp.sqrt_grr;
    const double s2 = 1.0 + dw * dw / grr;
    const double proj = data.n() * rp.kt + rp.kn * (1.0 - dw * dw / (grr * s2));
    return divergence + proj;
  }

  const Vec x = dom.nodes[node].x;
  const Mat3 ginv = data.metric_inv(x);
  auto vfield = [&](int m) -> std::optional<Vec> {  // X^i = g^{ij} dw_j / s
    if (!g.defined[m]) return std::nullopt;
    const Vec dw = grid_gradient(dom, g.w, m);
    const Mat3 gim = data.metric_inv(dom.nodes[m].x);
    const double s = std::sqrt(1.0 + std::pow(covector_norm(dw, gim, dom.dim), 2));
    Vec X = raise_index(gim, dw, dom.dim);
    for (int i = 0; i < dom.dim; ++i) X[i] /= s;
    return X;
  };
  const Vec Xc = *vfield(node);
  double divergence = 0;
  for (int a = 0; a < dom.dim; ++a) {
    const int p = dom.neighbor(node, a, +1);
    const int m = dom.neighbor(node, a, -1);
    const auto Xp = p >= 0 ? vfield(p) : std::nullopt;
    const auto Xm = m >= 0 ? vfield(m) : std::nullopt;
    if (Xp && Xm)
      divergence += ((*Xp)[a] - (*Xm)[a]) / (2 * dom.h);
    else if (Xp)
      divergence += ((*Xp)[a] - Xc[a]) / dom.h;
    else if (Xm)
      divergence += (Xc[a] - (*Xm)[a]) / dom.h;
  }
  const Ten3 dg = data.metric_deriv(x);
  for (int k = 0; k < dom.dim; ++k) {
    double tr = 0;
    for (int i = 0; i < dom.dim; ++i)
      for (int l = 0; l < dom.dim; ++l) tr += ginv(i, l) * dg(i, l, k);
    divergence += 0.5 * tr * Xc[k];
  }
  const Vec dw = grid_gradient(dom, g.w, node);
  const double s2 = 1.0 + std::pow(covector_norm(dw, ginv, dom.dim), 2);
  const Vec dwu = raise_index(ginv, dw, dom.dim);
  const Mat3 K = data.extrinsic(x);
  double proj = 0;
  for (int i = 0; i < dom.dim; ++i)
    for (int j = 0; j < dom.dim; ++j)
      proj += (ginv(i, j) - dwu[i] * dwu[j] / s2) * K(i, j);
  return divergence + proj;
}

double residual_mots_cylinder(const InitialDataSet& data, double r) {
  // theta+ of the coordinate sphere; the vertical cylinder over it has the
  // same null expansion because K carries no z components.
  Vec x{r, 0, 0};
  if (data.dim == 3) x = Vec{r / std::sqrt(3.0), r / std::sqrt(3.0), r / std::sqrt(3.0)};
  const double rr = norm(x, data.dim);
  Vec grad;
  Mat3 hess;
  for (int i = 0; i < data.dim; ++i) {
    grad[i] = x[i] / rr;
    for (int j = 0; j < data.dim; ++j)
      hess(i, j) = (i == j ? 1.0 : 0.0) / rr - x[i] * x[j] / (rr * rr * rr);
  }
  return levelset_theta_analytic(data, x, grad, hess).theta_plus;
}

// ---------------------------------------------------------------------------
// Surfaces.

double surface_area(const SurfaceSample& s) {
  if (s.dmu.empty()) throw std::runtime_error("surface_area: empty sample");
  double a = 0;
  for (double d : s.dmu) a += d;
  return a;
}

SurfaceSample sphere_sample(const InitialDataSet& data, double r, int count) {
  SurfaceSample s;
  const int dim = data.dim;
  const auto pts = sphere_points(dim, r, count);
  const double coord_patch =
      (dim == 2 ? 2 * kPi * r : 4 * kPi * r * r) / double(count);
  for (const Vec& x : pts) {
    const Mat3 g = data.metric(x);
    const Mat3 ginv = data.metric_inv(x);
    // tangential metric area scale: sqrt(det g) * |grad r|_g relates the
    // coordinate sphere patch to its metric area (co-area factor).
    Vec dr;
    const double rr = norm(x, dim);
    for (int i = 0; i < dim; ++i) dr[i] = x[i] / rr;
    const double co = std::sqrt(det(g, dim)) * covector_norm(dr, ginv, dim);
    Vec grad = dr;
    Mat3 hess;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        hess(i, j) = (i == j ? 1.0 : 0.0) / rr - x[i] * x[j] / (rr * rr * rr);
    const ThetaValues tv = levelset_theta_analytic(data, x, grad, hess);
    s.points.push_back(x);
    s.dmu.push_back(coord_patch * co);
    s.normal.push_back(tv.normal);
    s.H.push_back(tv.H);
    s.P.push_back(tv.P);
    s.theta_plus.push_back(tv.theta_plus);
  }
  return s;
}

namespace {

// Linear interpolation point on a cell edge.
Vec edge_point(const Vec& a, const Vec& b, double fa, double fb, double level) {
  const double t = (level - fa) / (fb - fa);
  Vec p;
  for (int i = 0; i < 3; ++i) p[i] = a[i] + t * (b[i] - a[i]);
  return p;
}

double tri_area_metric(const InitialDataSet& data, const Vec& p0, const Vec& p1,
                       const Vec& p2) {
  Vec c{(p0[0] + p1[0] + p2[0]) / 3, (p0[1] + p1[1] + p2[1]) / 3,
        (p0[2] + p1[2] + p2[2]) / 3};
  const Mat3 g = data.metric(c);
  Vec e1, e2;
  for (int i = 0; i < 3; ++i) {
    e1[i] = p1[i] - p0[i];
    e2[i] = p2[i] - p0[i];
  }
  auto gdot = [&](const Vec& a, const Vec& b) {
    double s = 0;
    for (int i = 0; i < data.dim; ++i)
      for (int j = 0; j < data.dim; ++j) s += g(i, j) * a[i] * b[j];
    return s;
  };
  const double e11 = gdot(e1, e1), e12 = gdot(e1, e2), e22 = gdot(e2, e2);
  return 0.5 * std::sqrt(std::max(0.0, e11 * e22 - e12 * e12));
}

double seg_length_metric(const InitialDataSet& data, const Vec& p0, const Vec& p1) {
  Vec c{(p0[0] + p1[0]) / 2, (p0[1] + p1[1]) / 2, 0};
  const Mat3 g = data.metric(c);
  Vec e;
  for (int i = 0; i < 3; ++i) e[i] = p1[i] - p0[i];
  double s = 0;
  for (int i = 0; i < data.dim; ++i)
    for (int j = 0; j < data.dim; ++j) s += g(i, j) * e[i] * e[j];
  return std::sqrt(std::max(0.0, s));
}

// 6-tetrahedra decomposition of the unit cube around the 0-7 diagonal.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 3, 2, 7}, {0, 2, 6, 7},
                             {0, 6, 4, 7}, {0, 4, 5, 7}, {0, 5, 1, 7}};
constexpr int kCubeOffsets[8][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0},
                                    {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};

struct CellVisitor {
  const AnnularDomain& dom;
  const InitialDataSet& data;
  const std::vector<double>& field;
  double level;
  SurfaceSample* out;
  const std::vector<ThetaValues>* nodal_theta;
  double mult = 1.0;

  void add_triangle(const Vec& p0, const Vec& p1, const Vec& p2, int ref_node) {
    const double a = tri_area_metric(data, p0, p1, p2) * mult;
    if (!(a > 0)) return;
    Vec c{(p0[0] + p1[0] + p2[0]) / 3, (p0[1] + p1[1] + p2[1]) / 3,
          (p0[2] + p1[2] + p2[2]) / 3};
    out->points.push_back(c);
    out->dmu.push_back(a);
    if (nodal_theta) {
      const ThetaValues& tv = (*nodal_theta)[ref_node];
      out->normal.push_back(tv.normal);
      out->H.push_back(tv.H);
      out->P.push_back(tv.P);
      out->theta_plus.push_back(tv.theta_plus);
    } else {
      out->normal.push_back(Vec{});
      out->H.push_back(0);
      out->P.push_back(0);
      out->theta_plus.push_back(0);
    }
  }

  void tetra(const std::array<Vec, 4>& p, const std::array<double, 4>& f, int ref_node) {
    int below[4], above[4], nb = 0, na = 0;
    for (int i = 0; i < 4; ++i) (f[i] < level ? below[nb++] : above[na++]) = i;
    if (nb == 0 || na == 0) return;
    if (nb == 1 || na == 1) {
      const int lone = (nb == 1) ? below[0] : above[0];
      const int* rest = (nb == 1) ? above : below;
      Vec q[3];
      for (int i = 0; i < 3; ++i)
        q[i] = edge_point(p[lone], p[rest[i]], f[lone], f[rest[i]], level);
      add_triangle(q[0], q[1], q[2], ref_node);
    } else {
      // 2-2 split: quad with corners on the four crossing edges
      const Vec q00 = edge_point(p[below[0]], p[above[0]], f[below[0]], f[above[0]], level);
      const Vec q01 = edge_point(p[below[0]], p[above[1]], f[below[0]], f[above[1]], level);
      const Vec q10 = edge_point(p[below[1]], p[above[0]], f[below[1]], f[above[0]], level);
      const Vec q11 = edge_point(p[below[1]], p[above[1]], f[below[1]], f[above[1]], level);
      add_triangle(q00, q01, q11, ref_node);
      add_triangle(q00, q11, q10, ref_node);
    }
  }
};

}  // namespace

SurfaceSample extract_level_set(const AnnularDomain& dom, const InitialDataSet& data,
                                const std::vector<double>& field, double level,
                                const std::vector<ThetaValues>* nodal_theta) {
  SurfaceSample out;
  if (dom.kind == GridKind::radial) {
    // Scan for the (first) crossing radius and report the whole sphere.
    for (std::size_t i = 0; i + 1 < dom.nodes.size(); ++i) {
      const double fa = field[i], fb = field[i + 1];
      if ((fa < level) == (fb < level)) continue;
      const double ra = dom.nodes[i].x[0];
      double r = ra + dom.h * (level - fa) / (fb - fa);
      // quadratic refinement keeps the area derivative smooth in the level
      if (i + 2 < dom.nodes.size()) {
        const double fc = field[i + 2];
        const double c2 = 0.5 * (fc - 2 * fb + fa) / (dom.h * dom.h);
        const double c1 = (fb - fa) / dom.h - c2 * dom.h;  // du/dr at node i
        if (std::abs(c1) > 1e-14) {
          double rr = r;
          for (int it = 0; it < 3; ++it) {
            const double s = rr - ra;
            const double f = fa + c1 * s + c2 * s * s - level;
            const double df = c1 + 2 * c2 * s;
            if (std::abs(df) < 1e-14) break;
            rr -= f / df;
          }
          if (rr >= ra && rr <= ra + dom.h) r = rr;
        }
      }
      const RadialPoint rp = radial_reduction_at(data, r);
      out.points.push_back(Vec{r, 0, 0});
      out.dmu.push_back(rp.area);
      const double H = rp.darea / (rp.sqrt_grr * rp.area), P = data.n() * rp.kt;
      out.normal.push_back(Vec{1.0 / rp.sqrt_grr, 0, 0});
      out.H.push_back(H);
      out.P.push_back(P);
      out.theta_plus.push_back(H + P);
      break;
    }
    return out;
  }

  CellVisitor vis{dom, data, field, level, &out, nodal_theta,
                  dom.octant ? double(1 << dom.dim) : 1.0};
  const int ni = dom.shape[0] - 1, nj = dom.shape[1] - 1,
            nk = (dom.dim == 3) ? dom.shape[2] - 1 : 1;
  for (int k = 0; k < nk; ++k)
    for (int j = 0; j < nj; ++j)
      for (int i = 0; i < ni; ++i) {
        if (dom.dim == 2) {
          const int n00 = dom.node_at(i, j, 0), n10 = dom.node_at(i + 1, j, 0);
          const int n01 = dom.node_at(i, j + 1, 0), n11 = dom.node_at(i + 1, j + 1, 0);
          if (n00 < 0 || n10 < 0 || n01 < 0 || n11 < 0) continue;
          const int ids[4] = {n00, n10, n11, n01};
          // split the cell into two triangles; each contributes a segment
          const int tri[2][3] = {{0, 1, 2}, {0, 2, 3}};
          for (auto& t : tri) {
            Vec p[3];
            double f[3];
            for (int v = 0; v < 3; ++v) {
              p[v] = dom.nodes[ids[t[v]]].x;
              f[v] = field[ids[t[v]]];
            }
            int below[3], above[3], nb = 0, na = 0;
            for (int v = 0; v < 3; ++v) (f[v] < level ? below[nb++] : above[na++]) = v;
            if (nb == 0 || na == 0) continue;
            const int lone = (nb == 1) ? below[0] : above[0];
            const int o1 = (lone + 1) % 3, o2 = (lone + 2) % 3;
            const Vec q1 = edge_point(p[lone], p[o1], f[lone], f[o1], level);
            const Vec q2 = edge_point(p[lone], p[o2], f[lone], f[o2], level);
            const double len = seg_length_metric(data, q1, q2) * vis.mult;
            if (!(len > 0)) continue;
            Vec c{(q1[0] + q2[0]) / 2, (q1[1] + q2[1]) / 2, 0};
            out.points.push_back(c);
            out.dmu.push_back(len);
            if (nodal_theta) {
              const ThetaValues& tv = (*nodal_theta)[n00];
              out.normal.push_back(tv.normal);
              out.H.push_back(tv.H);
              out.P.push_back(tv.P);
              out.theta_plus.push_back(tv.theta_plus);
            } else {
              out.normal.push_back(Vec{});
              out.H.push_back(0);
              out.P.push_back(0);
              out.theta_plus.push_back(0);
            }
          }
        } else {
          int ids[8];
          bool ok = true;
          for (int c = 0; c < 8; ++c) {
            ids[c] = dom.node_at(i + kCubeOffsets[c][0], j + kCubeOffsets[c][1],
                                 k + kCubeOffsets[c][2]);
            ok = ok && ids[c] >= 0;
          }
          if (!ok) continue;
          double f[8];
          bool crossing = false;
          for (int c = 0; c < 8; ++c) f[c] = field[ids[c]];
          for (int c = 1; c < 8; ++c)
            if ((f[c] < level) != (f[0] < level)) crossing = true;
          if (!crossing) continue;
          for (const auto& tet : kTets) {
            std::array<Vec, 4> p;
            std::array<double, 4> fv;
            for (int v = 0; v < 4; ++v) {
              p[v] = dom.nodes[ids[tet[v]]].x;
              fv[v] = f[tet[v]];
            }
            vis.tetra(p, fv, ids[0]);
          }
        }
      }
  return out;
}

double indicator_perimeter(const AnnularDomain& dom, const InitialDataSet& data,
                           const std::vector<std::uint8_t>& inside,
                           const std::vector<std::uint8_t>* window) {
  if (dom.kind == GridKind::radial) {
    // every 0/1 flip contributes one sphere at the midpoint radius
    double total = 0;
    for (std::size_t i = 0; i + 1 < dom.nodes.size(); ++i) {
      if (inside[i] == inside[i + 1]) continue;
      if (window && (!(*window)[i] || !(*window)[i + 1])) continue;
      const double r = 0.5 * (dom.nodes[i].x[0] + dom.nodes[i + 1].x[0]);
      total += radial_reduction_at(data, r).area;
    }
    return total;
  }
  // March the 0.5 level of the indicator over all grid cells; unmasked
  // corners read 0, so the boundary of F against the excluded region is
  // measured too (differences of J between nested sets then cancel exactly
  // on shared pieces). Cells with a flagged-out masked corner are skipped
  // when a window is supplied.
  auto corner = [&](int i, int j, int k, bool* in_window) -> double {
    const int n = dom.node_at(i, j, k);
    if (n < 0) return 0.0;
    if (window && !(*window)[n]) *in_window = false;
    return inside[n] ? 1.0 : 0.0;
  };
  auto point_of = [&](int i, int j, int k) {
    return Vec{dom.origin[0] + i * dom.h, dom.origin[1] + j * dom.h,
               dom.origin[2] + k * dom.h};
  };
  const double mult = dom.octant ? double(1 << dom.dim) : 1.0;
  double total = 0;
  const int ni = dom.shape[0] - 1, nj = dom.shape[1] - 1,
            nk = (dom.dim == 3) ? dom.shape[2] - 1 : 1;
  for (int k = 0; k < nk; ++k)
    for (int j = 0; j < nj; ++j)
      for (int i = 0; i < ni; ++i) {
        if (dom.dim == 2) {
          bool okw = true;
          const double f00 = corner(i, j, 0, &okw), f10 = corner(i + 1, j, 0, &okw);
          const double f01 = corner(i, j + 1, 0, &okw), f11 = corner(i + 1, j + 1, 0, &okw);
          if (!okw) continue;
          if (f00 == f10 && f10 == f01 && f01 == f11) continue;
          const Vec p[4] = {point_of(i, j, 0), point_of(i + 1, j, 0),
                            point_of(i + 1, j + 1, 0), point_of(i, j + 1, 0)};
          const double fv[4] = {f00, f10, f11, f01};
          const int tri[2][3] = {{0, 1, 2}, {0, 2, 3}};
          for (auto& t : tri) {
            int below[3], above[3], nb = 0, na = 0;
            for (int v = 0; v < 3; ++v)
              (fv[t[v]] < 0.5 ? below[nb++] : above[na++]) = v;
            if (nb == 0 || na == 0) continue;
            const int lone = (nb == 1) ? below[0] : above[0];
            const int o1 = (lone + 1) % 3, o2 = (lone + 2) % 3;
            const Vec q1 =
                edge_point(p[t[lone]], p[t[o1]], fv[t[lone]], fv[t[o1]], 0.5);
            const Vec q2 =
                edge_point(p[t[lone]], p[t[o2]], fv[t[lone]], fv[t[o2]], 0.5);
            total += seg_length_metric(data, q1, q2) * mult;
          }
        } else {
          bool okw = true;
          double fv[8];
          Vec pv[8];
          for (int c = 0; c < 8; ++c) {
            const int ci = i + kCubeOffsets[c][0], cj = j + kCubeOffsets[c][1],
                      ck = k + kCubeOffsets[c][2];
            fv[c] = corner(ci, cj, ck, &okw);
            pv[c] = point_of(ci, cj, ck);
          }
          if (!okw) continue;
          bool mixed = false;
          for (int c = 1; c < 8; ++c) mixed = mixed || (fv[c] != fv[0]);
          if (!mixed) continue;
          for (const auto& tet : kTets) {
            std::array<Vec, 4> p;
            std::array<double, 4> f;
            for (int v = 0; v < 4; ++v) {
              p[v] = pv[tet[v]];
              f[v] = fv[tet[v]];
            }
            int below[4], above[4], nb = 0, na = 0;
            for (int v = 0; v < 4; ++v) (f[v] < 0.5 ? below[nb++] : above[na++]) = v;
            if (nb == 0 || na == 0) continue;
            if (nb == 1 || na == 1) {
              const int lone = (nb == 1) ? below[0] : above[0];
              const int* rest = (nb == 1) ? above : below;
              Vec q[3];
              for (int v = 0; v < 3; ++v)
                q[v] = edge_point(p[lone], p[rest[v]], f[lone], f[rest[v]], 0.5);
              total += tri_area_metric(data, q[0], q[1], q[2]) * mult;
            } else {
              const Vec q00 = edge_point(p[below[0]], p[above[0]], f[below[0]], f[above[0]], 0.5);
              const Vec q01 = edge_point(p[below[0]], p[above[1]], f[below[0]], f[above[1]], 0.5);
              const Vec q10 = edge_point(p[below[1]], p[above[0]], f[below[1]], f[above[0]], 0.5);
              const Vec q11 = edge_point(p[below[1]], p[above[1]], f[below[1]], f[above[1]], 0.5);
              total += tri_area_metric(data, q00, q01, q11) * mult;
              total += tri_area_metric(data, q00, q11, q10) * mult;
            }
          }
        }
      }
  return total;
}

double node_volume(const AnnularDomain& dom, const InitialDataSet& data, int node) {
  const Vec x = dom.nodes[node].x;
  if (dom.kind == GridKind::radial) {
    const RadialPoint rp = radial_reduction_at(data, x[0]);
    return rp.sqrt_grr * rp.area * dom.h;
  }
  double weight = data.sqrt_det_metric(x) * dom.cell_volume();
  if (dom.octant) {
    double share = 1 << dom.dim;
    for (int a = 0; a < dom.dim; ++a)
      if (dom.nodes[node].ijk[a] == 0) share *= 0.5;
    weight *= share;
  }
  return weight;
}

double bulk_integral_P(const AnnularDomain& dom, const InitialDataSet& data,
                       const std::vector<int>& region_nodes,
                       const std::function<Vec(int)>& unit_normal) {
  double total = 0;
  for (int n : region_nodes)
    total += projector_trace_K(data, dom.nodes[n].x, unit_normal(n)) *
             node_volume(dom, data, n);
  return total;
}

}  // namespace nullflow
