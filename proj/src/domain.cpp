#include "nullflow/domain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "nullflow/geometry.hpp"

namespace nullflow {

namespace {

constexpr int kSymIdx[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};

void pack_sym(const Mat3& m, int dim, double* out) {
  out[0] = m(0, 0);
  out[1] = dim > 1 ? m(0, 1) : 0;
  out[2] = dim > 2 ? m(0, 2) : 0;
  out[3] = dim > 1 ? m(1, 1) : 0;
  out[4] = dim > 2 ? m(1, 2) : 0;
  out[5] = dim > 2 ? m(2, 2) : 0;
}

}  // namespace

GeometryCache GeometryCache::build(const AnnularDomain& dom, const InitialDataSet& data) {
  GeometryCache gc;
  gc.dim = dom.dim;
  const std::size_t n = dom.nodes.size();
  if (dom.kind == GridKind::radial) {
    gc.r_sqrt_grr.resize(n);
    gc.r_area.resize(n);
    gc.r_kt.resize(n);
    gc.r_kn.resize(n);
    gc.rf_sqrt_grr.assign(n, 0.0);
    gc.rf_area.assign(n, 0.0);
    auto reduce = [&](double r, double* sg, double* ar, double* kt, double* kn) {
      const Vec x{r, 0, 0};
      const Mat3 g = data.metric(x);
      const Mat3 K = data.extrinsic(x);
      const int sn = data.n();
      const double c = (sn == 1) ? 2 * kPi : 4 * kPi;
      *sg = std::sqrt(g(0, 0));
      *ar = c * std::pow(r, sn) * std::pow(g(1, 1), sn / 2.0);
      if (kt) *kt = K(1, 1) / g(1, 1);
      if (kn) *kn = K(0, 0) / g(0, 0);
    };
    for (std::size_t i = 0; i < n; ++i) {
      reduce(dom.nodes[i].x[0], &gc.r_sqrt_grr[i], &gc.r_area[i], &gc.r_kt[i], &gc.r_kn[i]);
      if (dom.neighbor(int(i), 0, +1) >= 0)
        reduce(dom.nodes[i].x[0] + 0.5 * dom.h, &gc.rf_sqrt_grr[i], &gc.rf_area[i], nullptr,
               nullptr);
    }
    return gc;
  }

  gc.ginv.assign(n * 6, 0.0);
  gc.K.assign(n * 6, 0.0);
  gc.sqrtg.assign(n, 0.0);
  gc.face_ginv.assign(n * dom.dim * 6, 0.0);
  gc.face_sqrtg.assign(n * dom.dim, 0.0);
  gc.face_ok.assign(n * dom.dim, 0);
  parallel_for(
      n,
      [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          const Vec x = dom.nodes[i].x;
          pack_sym(data.metric_inv(x), dom.dim, &gc.ginv[i * 6]);
          pack_sym(data.extrinsic(x), dom.dim, &gc.K[i * 6]);
          gc.sqrtg[i] = data.sqrt_det_metric(x);
          for (int a = 0; a < dom.dim; ++a) {
            if (dom.neighbor(int(i), a, +1) < 0) continue;
            Vec xf = x;
            xf[a] += 0.5 * dom.h;
            pack_sym(data.metric_inv(xf), dom.dim, &gc.face_ginv[(i * dom.dim + a) * 6]);
            gc.face_sqrtg[i * dom.dim + a] = data.sqrt_det_metric(xf);
            gc.face_ok[i * dom.dim + a] = 1;
          }
        }
      },
      worker_threads());
  return gc;
}

double choose_alpha_subsolution(const InitialDataSet& data, double r_min, double r_max) {
  if (!(r_min > 0) || !(r_max > r_min))
    throw std::invalid_argument("choose_alpha_subsolution: need 0 < r_min < r_max");
  const int n_radii = 24;
  std::vector<Vec> samples;
  for (int i = 0; i < n_radii; ++i) {
    const double r = r_min * std::pow(r_max / r_min, double(i) / (n_radii - 1));
    const int ndir = (data.dim == 2) ? 8 : 12;
    for (const Vec& x : sphere_points(data.dim, r, ndir)) samples.push_back(x);
  }

  auto residual = [&](double alpha, double s, const Vec& x) {
    // v = alpha log r: grad and coordinate Hessian are closed-form.
    const double r = norm(x, data.dim);
    Vec grad;
    Mat3 hess;
    for (int i = 0; i < data.dim; ++i) {
      grad[i] = alpha * x[i] / (r * r);
      for (int j = 0; j < data.dim; ++j)
        hess(i, j) = alpha * ((i == j ? 1.0 : 0.0) / (r * r) -
                              2 * x[i] * x[j] / (r * r * r * r));
    }
    const ThetaValues tv = levelset_theta_analytic(data, x, grad, hess);
    const double gn = covector_norm(grad, data.metric_inv(x), data.dim);
    return tv.H + s * tv.P - gn;
  };

  const double alpha_top = double(data.n());
  for (double alpha = alpha_top; alpha >= 0.05; alpha -= 0.01) {
    bool ok = true;
    for (const Vec& x : samples) {
      for (double s : {0.0, 0.5, 1.0})
        if (residual(alpha, s, x) < -1e-10) {
          ok = false;
          break;
        }
      if (!ok) break;
    }
    if (ok) return alpha;
  }
  std::ostringstream os;
  os << "choose_alpha_subsolution: no qualifying coefficient on [" << r_min << ", " << r_max
     << "]; increase r_min";
  throw std::runtime_error(os.str());
}

namespace {

// Crossing distance from x along +-axis to the sphere |y| = r, in (0, h];
// falls back to h/2 if the quadratic degenerates.
double sphere_crossing(const Vec& x, int axis, int sign, double r, double h, int dim) {
  double b = sign * x[axis];
  double c = dot(x, x, dim) - r * r;
  // |x + t e|^2 = r^2  =>  t^2 + 2 b t + c = 0
  const double disc = b * b - c;
  if (disc < 0) return 0.5 * h;
  const double root = std::sqrt(disc);
  for (double t : {-b - root, -b + root})
    if (t > 0 && t <= h + 1e-12) return std::min(t, h);
  return 0.5 * h;
}

}  // namespace

AnnularDomain build_domain(const InitialDataSet& data, double e0_radius, double L, double h,
                           GridKind kind, double alpha_sub, bool octant,
                           const std::function<double(const Vec&)>& e0_levelset) {
  if (!(L > 0) || !(h > 0)) throw std::invalid_argument("build_domain: need L > 0, h > 0");
  AnnularDomain dom;
  dom.kind = kind;
  dom.dim = data.dim;
  dom.h = h;
  dom.L = L;
  dom.alpha_sub = alpha_sub;
  dom.inner_radius = e0_radius;
  dom.outer_radius = std::exp(L / alpha_sub);
  dom.octant = octant && kind == GridKind::cartesian;
  if (dom.outer_radius <= e0_radius)
    throw std::invalid_argument("build_domain: outer radius exp(L/alpha) <= E0 radius");

  auto inside_e0 = [&](const Vec& x) {
    if (e0_levelset) return e0_levelset(x) < 0.0;
    return norm(x, dom.dim) < e0_radius;
  };
  auto outside_FL = [&](const Vec& x) {
    return dom.alpha_sub * std::log(std::max(norm(x, dom.dim), 1e-300)) >= L;
  };

  if (kind == GridKind::radial) {
    if (e0_levelset)
      throw std::invalid_argument("build_domain: radial grids require a ball E0");
    const int nnode = int(std::ceil((dom.outer_radius - e0_radius) / h)) + 1;
    if (nnode < 4) throw std::invalid_argument("build_domain: empty radial mask");
    dom.shape = {nnode, 1, 1};
    dom.origin = Vec{e0_radius, 0, 0};
    dom.node_of_grid.assign(nnode, -1);
    for (int i = 0; i < nnode; ++i) {
      DomainNode nd;
      nd.ijk = {i, 0, 0};
      nd.x = Vec{e0_radius + i * h, 0, 0};
      dom.node_of_grid[i] = int(dom.nodes.size());
      dom.nodes.push_back(nd);
    }
    auto& first = dom.nodes.front();
    first.role = NodeRole::inner_boundary;
    first.bc_delta = 0.0;
    first.bc_axis = 0;
    first.bc_sign = -1;
    first.bc_neighbor = 1;
    auto& last = dom.nodes.back();
    last.role = NodeRole::outer_boundary;
    last.bc_axis = 0;
    last.bc_sign = +1;
    last.bc_neighbor = int(dom.nodes.size()) - 2;
    // signed offset: the {v = L} crossing usually falls between the last two
    // nodes, so the extrapolated Dirichlet point sits slightly inward
    last.bc_delta = std::clamp(dom.outer_radius - last.x[0], -0.9 * h, h);
    for (int i = 0; i < int(dom.nodes.size()); ++i) {
      if (dom.nodes[i].role == NodeRole::interior) {
        dom.interior_ids.push_back(i);
      } else if (dom.nodes[i].role == NodeRole::inner_boundary) {
        dom.inner_ids.push_back(i);
      } else {
        dom.outer_ids.push_back(i);
      }
    }
    return dom;
  }

  // Cartesian box: [-R-2h, R+2h]^d, or [0, R+2h]^d for the octant.
  const double R = dom.outer_radius;
  const int ncell = int(std::ceil((R + 2 * h) / h));
  for (int a = 0; a < dom.dim; ++a) {
    dom.shape[a] = dom.octant ? ncell + 1 : 2 * ncell + 1;
    dom.origin[a] = dom.octant ? 0.0 : -ncell * h;
  }
  for (int a = dom.dim; a < 3; ++a) {
    dom.shape[a] = 1;
    dom.origin[a] = 0.0;
  }
  const std::size_t total =
      std::size_t(dom.shape[0]) * dom.shape[1] * dom.shape[2];
  dom.node_of_grid.assign(total, -1);

  auto point_of = [&](int i, int j, int k) {
    return Vec{dom.origin[0] + i * h, dom.origin[1] + j * h, dom.origin[2] + k * h};
  };
  for (int k = 0; k < dom.shape[2]; ++k)
    for (int j = 0; j < dom.shape[1]; ++j)
      for (int i = 0; i < dom.shape[0]; ++i) {
        const Vec x = point_of(i, j, k);
        if (inside_e0(x) || outside_FL(x)) continue;
        DomainNode nd;
        nd.ijk = {i, j, k};
        nd.x = x;
        dom.node_of_grid[dom.grid_index(i, j, k)] = int(dom.nodes.size());
        dom.nodes.push_back(nd);
      }
  if (dom.nodes.empty()) throw std::invalid_argument("build_domain: empty mask");

  // classify boundary nodes by their excluded face neighbors
  for (int id = 0; id < int(dom.nodes.size()); ++id) {
    DomainNode& nd = dom.nodes[id];
    double best_delta = 2 * h;
    for (int a = 0; a < dom.dim; ++a)
      for (int sg : {-1, +1}) {
        std::array<int, 3> c = nd.ijk;
        c[a] += sg;
        if (dom.octant && c[a] < 0) continue;  // reflection plane, not a boundary
        if (dom.node_at(c[0], c[1], c[2]) >= 0) continue;
        Vec xn{dom.origin[0] + c[0] * h, dom.origin[1] + c[1] * h,
               dom.origin[2] + c[2] * h};
        const bool inner = inside_e0(xn);
        double delta;
        if (e0_levelset && inner) {
          const double fa = e0_levelset(nd.x), fb = e0_levelset(xn);
          delta = (fb == fa) ? 0.5 * h : h * fa / (fa - fb);
          delta = std::clamp(delta, 0.0, h);
        } else {
          delta = sphere_crossing(nd.x, a, sg, inner ? e0_radius : dom.outer_radius, h,
                                  dom.dim);
        }
        if (delta < best_delta) {
          best_delta = delta;
          nd.role = inner ? NodeRole::inner_boundary : NodeRole::outer_boundary;
          nd.bc_axis = a;
          nd.bc_sign = sg;
          nd.bc_delta = delta;
          nd.bc_neighbor = dom.neighbor(id, a, -sg);
        }
      }
    if (nd.role != NodeRole::interior && nd.bc_neighbor < 0) nd.bc_delta = 0.0;
  }

  // connectivity check: every node must reach both boundaries through the mask
  {
    std::vector<int> comp(dom.nodes.size(), -1);
    std::deque<int> queue;
    queue.push_back(0);
    comp[0] = 0;
    while (!queue.empty()) {
      const int id = queue.front();
      queue.pop_front();
      for (int a = 0; a < dom.dim; ++a)
        for (int sg : {-1, +1}) {
          const int nb = dom.neighbor(id, a, sg);
          if (nb >= 0 && comp[nb] < 0) {
            comp[nb] = 0;
            queue.push_back(nb);
          }
        }
    }
    const bool connected = std::all_of(comp.begin(), comp.end(), [](int c) { return c == 0; });
    if (!connected)
      throw std::runtime_error("build_domain: mask is disconnected; refine h");
  }

  for (int id = 0; id < int(dom.nodes.size()); ++id) {
    switch (dom.nodes[id].role) {
      case NodeRole::interior: dom.interior_ids.push_back(id); break;
      case NodeRole::inner_boundary: dom.inner_ids.push_back(id); break;
      case NodeRole::outer_boundary: dom.outer_ids.push_back(id); break;
    }
  }
  if (dom.inner_ids.empty() || dom.outer_ids.empty())
    throw std::runtime_error("build_domain: a boundary node set is empty");
  return dom;
}

}  // namespace nullflow
