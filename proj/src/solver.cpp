#include "nullflow/solver.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "nullflow/dual.hpp"

namespace nullflow {

void SolveConfig::validate() const {
  if (eps_schedule.empty())
    throw std::invalid_argument("solve config: empty epsilon schedule");
  for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
    if (!(eps_schedule[i] > 0))
      throw std::invalid_argument("solve config: epsilon must be positive");
    if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1]))
      throw std::invalid_argument("solve config: epsilon schedule must decrease strictly");
  }
  if (s_steps < 1) throw std::invalid_argument("solve config: s_steps must be >= 1");
  if (max_iter < 1) throw std::invalid_argument("solve config: max_iter must be >= 1");
}

namespace {

constexpr int kSym[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};

// Stencil slot layout: 0 = center, 1 + 2a + (sign<0) = axis neighbors,
// then 4 diagonal slots per axis pair (a < b).
inline int slot_axis(int a, int sg) { return 1 + 2 * a + (sg < 0 ? 1 : 0); }
inline int pair_index(int a, int b, int dim) {
  if (dim == 2) return 0;
  if (a == 0) return b == 1 ? 0 : 1;
  return 2;
}
inline int slot_diag(int a, int sa, int b, int sb, int dim) {
  return 1 + 2 * dim + 4 * pair_index(a, b, dim) + (sa < 0 ? 2 : 0) + (sb < 0 ? 1 : 0);
}
inline int stencil_size(int dim, GridKind kind) {
  if (kind == GridKind::radial) return 3;
  return dim == 2 ? 9 : 19;
}

struct StencilMap {
  int count = 0;
  std::array<int, 19> node{};     // node id per slot or -1
  std::array<bool, 19> avail{};
};

StencilMap stencil_nodes(const AnnularDomain& dom, int id) {
  StencilMap sm;
  sm.count = stencil_size(dom.dim, dom.kind);
  const auto& c = dom.nodes[id].ijk;
  auto put = [&](int slot, int di, int dj, int dk) {
    const int nb = dom.node_at(c[0] + di, c[1] + dj, c[2] + dk);
    sm.node[slot] = nb;
    sm.avail[slot] = nb >= 0;
  };
  put(0, 0, 0, 0);
  if (dom.kind == GridKind::radial) {
    put(1, +1, 0, 0);
    put(2, -1, 0, 0);
    return sm;
  }
  for (int a = 0; a < dom.dim; ++a)
    for (int sg : {+1, -1}) {
      int d[3] = {0, 0, 0};
      d[a] = sg;
      put(slot_axis(a, sg), d[0], d[1], d[2]);
    }
  for (int a = 0; a < dom.dim; ++a)
    for (int b = a + 1; b < dom.dim; ++b)
      for (int sa : {+1, -1})
        for (int sb : {+1, -1}) {
          int d[3] = {0, 0, 0};
          d[a] = sa;
          d[b] = sb;
          put(slot_diag(a, sa, b, sb, dom.dim), d[0], d[1], d[2]);
        }
  return sm;
}

// Frozen coefficients for the Picard direction.
struct PicardFreeze {
  std::vector<double> face_W;  // node*dim + axis (face toward +axis)
  std::vector<double> node_W;
  std::vector<double> node_Pi;
};

// One-axis difference around a base slot, degrading to one-sided stencils.
template <class T>
T slot_diff(const T* u, const std::array<bool, 19>& av, int base, int plus, int minus,
            double h) {
  const bool hp = av[plus], hm = av[minus];
  if (hp && hm) return (u[plus] - u[minus]) / T(2 * h);
  if (hp) return (u[plus] - u[base]) / T(h);
  if (hm) return (u[base] - u[minus]) / T(h);
  return T(0.0);
}

template <class T>
struct CartesianKernel {
  const AnnularDomain& dom;
  const GeometryCache& gc;
  double eps, s;
  const PicardFreeze* freeze;

  T operator()(int id, const StencilMap& sm, const T* u) const {
    const int dim = dom.dim;
    const double h = dom.h;
    const auto& av = sm.avail;

    auto tangential = [&](int base_axis, int base_sign, int b) -> T {
      // derivative along b at the node sitting at (base_axis, base_sign);
      // base_axis < 0 means the center node
      if (base_axis < 0)
        return slot_diff(u, av, 0, slot_axis(b, +1), slot_axis(b, -1), h);
      const int base = slot_axis(base_axis, base_sign);
      int p, m;
      if (base_axis < b) {
        p = slot_diag(base_axis, base_sign, b, +1, dim);
        m = slot_diag(base_axis, base_sign, b, -1, dim);
      } else {
        p = slot_diag(b, +1, base_axis, base_sign, dim);
        m = slot_diag(b, -1, base_axis, base_sign, dim);
      }
      return slot_diff(u, av, base, p, m, h);
    };

    // oriented flux through the face from `owner` toward +axis a
    auto face_flux = [&](int a, int sg) -> T {
      const int owner = (sg > 0) ? sm.node[0] : sm.node[slot_axis(a, -1)];
      const double* fg = &gc.face_ginv[(std::size_t(owner) * dim + a) * 6];
      const double fsq = gc.face_sqrtg[std::size_t(owner) * dim + a];
      T grad[3];
      if (sg > 0)
        grad[a] = (u[slot_axis(a, +1)] - u[0]) / T(h);
      else
        grad[a] = (u[0] - u[slot_axis(a, -1)]) / T(h);
      for (int b = 0; b < dim; ++b) {
        if (b == a) continue;
        grad[b] = (tangential(-1, 0, b) + tangential(a, sg, b)) * T(0.5);
      }
      T num(0.0), norm2(0.0);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) norm2 += grad[i] * grad[j] * T(fg[kSym[i][j]]);
      for (int j = 0; j < dim; ++j) num += grad[j] * T(fg[kSym[a][j]]);
      if (freeze) return T(fsq) * num / T(freeze->face_W[std::size_t(owner) * dim + a]);
      const T W = sqrt(norm2 + T(eps * eps));
      return T(fsq) * num / W;
    };

    T div(0.0);
    for (int a = 0; a < dim; ++a) div += face_flux(a, +1) - face_flux(a, -1);
    div = div / T(h * gc.sqrtg[id]);

    if (freeze) return div + T(s * freeze->node_Pi[id]) - T(freeze->node_W[id]);

    const double* gi = &gc.ginv[std::size_t(id) * 6];
    const double* K = &gc.K[std::size_t(id) * 6];
    T grad[3], gradU[3];
    for (int b = 0; b < dim; ++b) grad[b] = tangential(-1, 0, b);
    T norm2(0.0);
    for (int i = 0; i < dim; ++i) {
      gradU[i] = T(0.0);
      for (int j = 0; j < dim; ++j) gradU[i] += T(gi[kSym[i][j]]) * grad[j];
    }
    for (int i = 0; i < dim; ++i) norm2 += gradU[i] * grad[i];
    const T W = sqrt(norm2 + T(eps * eps));
    T proj(0.0);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        proj += (T(gi[kSym[i][j]]) - gradU[i] * gradU[j] / (W * W)) * T(K[kSym[i][j]]);
    return div + T(s) * proj - W;
  }

  // frozen values for the Picard matrix, computed at the current iterate
  void freeze_at(int id, const StencilMap& sm, const double* u, PicardFreeze* out) const {
    const int dim = dom.dim;
    const double h = dom.h;
    const auto& av = sm.avail;
    auto tangential = [&](int base_axis, int base_sign, int b) -> double {
      if (base_axis < 0) return slot_diff(u, av, 0, slot_axis(b, +1), slot_axis(b, -1), h);
      const int base = slot_axis(base_axis, base_sign);
      int p, m;
      if (base_axis < b) {
        p = slot_diag(base_axis, base_sign, b, +1, dim);
        m = slot_diag(base_axis, base_sign, b, -1, dim);
      } else {
        p = slot_diag(b, +1, base_axis, base_sign, dim);
        m = slot_diag(b, -1, base_axis, base_sign, dim);
      }
      return slot_diff(u, av, base, p, m, h);
    };
    for (int a = 0; a < dim; ++a)
      for (int sg : {+1, -1}) {
        const int owner = (sg > 0) ? sm.node[0] : sm.node[slot_axis(a, -1)];
        const double* fg = &gc.face_ginv[(std::size_t(owner) * dim + a) * 6];
        double grad[3];
        grad[a] = (sg > 0) ? (u[slot_axis(a, +1)] - u[0]) / h
                           : (u[0] - u[slot_axis(a, -1)]) / h;
        for (int b = 0; b < dim; ++b) {
          if (b == a) continue;
          grad[b] = 0.5 * (tangential(-1, 0, b) + tangential(a, sg, b));
        }
        double norm2 = 0;
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) norm2 += grad[i] * grad[j] * fg[kSym[i][j]];
        out->face_W[std::size_t(owner) * dim + a] = std::sqrt(norm2 + eps * eps);
      }
    const double* gi = &gc.ginv[std::size_t(id) * 6];
    const double* K = &gc.K[std::size_t(id) * 6];
    double grad[3], gradU[3], norm2 = 0;
    for (int b = 0; b < dim; ++b) grad[b] = tangential(-1, 0, b);
    for (int i = 0; i < dim; ++i) {
      gradU[i] = 0;
      for (int j = 0; j < dim; ++j) gradU[i] += gi[kSym[i][j]] * grad[j];
      norm2 += gradU[i] * grad[i];
    }
    const double W = std::sqrt(norm2 + eps * eps);
    double proj = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        proj += (gi[kSym[i][j]] - gradU[i] * gradU[j] / (W * W)) * K[kSym[i][j]];
    out->node_W[id] = W;
    out->node_Pi[id] = proj;
  }
};

template <class T>
struct RadialKernel {
  const AnnularDomain& dom;
  const GeometryCache& gc;
  double eps, s;
  const PicardFreeze* freeze;

  T operator()(int id, const StencilMap& sm, const T* u) const {
    const double h = dom.h;
    const int ip = sm.node[1], im = sm.node[2];
    auto face_flux = [&](int owner, const T& du) -> T {
      const double sg = gc.rf_sqrt_grr[owner], A = gc.rf_area[owner];
      if (freeze) return T(A) * du / (T(sg) * T(freeze->face_W[owner]));
      const T W = sqrt(du * du / T(sg * sg) + T(eps * eps));
      return T(A) * du / (T(sg) * W);
    };
    const T dup = (u[1] - u[0]) / T(h);
    const T dum = (u[0] - u[2]) / T(h);
    const T div = (face_flux(id, dup) - face_flux(im, dum)) /
                  T(h * gc.r_sqrt_grr[id] * gc.r_area[id]);
    if (freeze) return div + T(s * freeze->node_Pi[id]) - T(freeze->node_W[id]);
    const T du = (u[1] - u[2]) / T(2 * h);
    const double sgr = gc.r_sqrt_grr[id];
    const T grad2 = du * du / T(sgr * sgr);
    const T W = sqrt(grad2 + T(eps * eps));
    const int n = dom.dim - 1;
    const T proj = T(n * gc.r_kt[id]) + T(gc.r_kn[id]) * (T(1.0) - grad2 / (W * W));
    (void)ip;
    return div + T(s) * proj - W;
  }

  void freeze_at(int id, const StencilMap& sm, const double* u, PicardFreeze* out) const {
    const double h = dom.h;
    const int im = sm.node[2];
    auto faceW = [&](int owner, double du) {
      const double sg = gc.rf_sqrt_grr[owner];
      return std::sqrt(du * du / (sg * sg) + eps * eps);
    };
    out->face_W[id] = faceW(id, (u[1] - u[0]) / h);
    out->face_W[im] = faceW(im, (u[0] - u[2]) / h);
    const double du = (u[1] - u[2]) / (2 * h);
    const double sgr = gc.r_sqrt_grr[id];
    const double grad2 = du * du / (sgr * sgr);
    const double W = std::sqrt(grad2 + eps * eps);
    out->node_W[id] = W;
    out->node_Pi[id] = (dom.dim - 1) * gc.r_kt[id] + gc.r_kn[id] * (1.0 - grad2 / (W * W));
  }
};

}  // namespace

struct FlowSolver::Workspace {
  std::vector<StencilMap> stencils;  // per interior node index
};

FlowSolver::FlowSolver(const InitialDataSet& data, std::shared_ptr<const AnnularDomain> dom,
                       SolveConfig config)
    : data_(data), dom_(std::move(dom)), config_(std::move(config)),
      cache_(GeometryCache::build(*dom_, data)) {}

namespace {

// Gathers stencil values and dispatches the kernel for residual or Jacobian.
template <class Kernel>
void assemble(const AnnularDomain& dom, const Kernel& kd, const std::vector<double>& u,
              double s_outer_bc, std::vector<double>* R,
              std::vector<Eigen::Triplet<double>>* trip) {
  const int ns = stencil_size(dom.dim, dom.kind);
  const std::size_t n = dom.nodes.size();
  R->assign(n, 0.0);

  std::vector<std::vector<Eigen::Triplet<double>>> trip_chunks;
  const int nchunk = std::max(1, worker_threads());
  trip_chunks.resize(nchunk);

  auto run = [&](std::size_t lo, std::size_t hi, int chunk) {
    auto* tloc = trip ? &trip_chunks[chunk] : nullptr;
    for (std::size_t id = lo; id < hi; ++id) {
      const DomainNode& nd = dom.nodes[id];
      if (nd.role != NodeRole::interior) {
        const double bc = nd.role == NodeRole::inner_boundary ? 0.0 : s_outer_bc;
        const double w = nd.bc_delta / dom.h;
        const int nbr = nd.bc_neighbor;
        double rv = u[id] * (1.0 + w) - bc;
        if (nbr >= 0) rv -= u[nbr] * w;
        (*R)[id] = rv;
        if (tloc) {
          tloc->emplace_back(int(id), int(id), 1.0 + w);
          if (nbr >= 0) tloc->emplace_back(int(id), nbr, -w);
        }
        continue;
      }
      const StencilMap sm = stencil_nodes(dom, int(id));
      if (!trip) {
        double uloc[19] = {0};
        for (int sct = 0; sct < ns; ++sct)
          if (sm.avail[sct]) uloc[sct] = u[sm.node[sct]];
        (*R)[id] = kd.template run<double>(int(id), sm, uloc);
      } else {
        if (ns <= 3) {
          Dual<3> uloc[3];
          for (int sct = 0; sct < 3; ++sct)
            if (sm.avail[sct]) uloc[sct] = Dual<3>::seeded(u[sm.node[sct]], sct);
          const Dual<3> r = kd.template run<Dual<3>>(int(id), sm, uloc);
          (*R)[id] = r.v;
          for (int sct = 0; sct < 3; ++sct)
            if (sm.avail[sct] && r.d[sct] != 0.0)
              tloc->emplace_back(int(id), sm.node[sct], r.d[sct]);
        } else if (ns <= 9) {
          Dual<9> uloc[9];
          for (int sct = 0; sct < 9; ++sct)
            if (sm.avail[sct]) uloc[sct] = Dual<9>::seeded(u[sm.node[sct]], sct);
          const Dual<9> r = kd.template run<Dual<9>>(int(id), sm, uloc);
          (*R)[id] = r.v;
          for (int sct = 0; sct < 9; ++sct)
            if (sm.avail[sct] && r.d[sct] != 0.0)
              tloc->emplace_back(int(id), sm.node[sct], r.d[sct]);
        } else {
          Dual<19> uloc[19];
          for (int sct = 0; sct < 19; ++sct)
            if (sm.avail[sct]) uloc[sct] = Dual<19>::seeded(u[sm.node[sct]], sct);
          const Dual<19> r = kd.template run<Dual<19>>(int(id), sm, uloc);
          (*R)[id] = r.v;
          for (int sct = 0; sct < 19; ++sct)
            if (sm.avail[sct] && r.d[sct] != 0.0)
              tloc->emplace_back(int(id), sm.node[sct], r.d[sct]);
        }
      }
    }
  };

  if (nchunk == 1 || n < 4096) {
    run(0, n, 0);
  } else {
    const std::size_t chunk = (n + nchunk - 1) / nchunk;
    std::vector<std::thread> pool;
    for (int t = 0; t < nchunk; ++t) {
      const std::size_t lo = std::min(n, t * chunk), hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&run, lo, hi, t] { run(lo, hi, t); });
    }
    for (auto& th : pool) th.join();
  }
  if (trip) {
    std::size_t total = 0;
    for (auto& c : trip_chunks) total += c.size();
    trip->clear();
    trip->reserve(total);
    for (auto& c : trip_chunks) trip->insert(trip->end(), c.begin(), c.end());
  }
}

// Adapter giving the kernels a uniform `run<T>` entry point.
struct KernelDispatch {
  const AnnularDomain& dom;
  const GeometryCache& gc;
  double eps, s;
  const PicardFreeze* freeze = nullptr;

  template <class T>
  T run(int id, const StencilMap& sm, const T* u) const {
    if (dom.kind == GridKind::radial) {
      RadialKernel<T> k{dom, gc, eps, s, freeze};
      return k(id, sm, u);
    }
    CartesianKernel<T> k{dom, gc, eps, s, freeze};
    return k(id, sm, u);
  }

  void freeze_all(const std::vector<double>& u, PicardFreeze* out) const {
    const std::size_t n = dom.nodes.size();
    out->face_W.assign(n * std::max(1, dom.kind == GridKind::radial ? 1 : dom.dim), 1.0);
    out->node_W.assign(n, 1.0);
    out->node_Pi.assign(n, 0.0);
    for (std::size_t id = 0; id < n; ++id) {
      if (dom.nodes[id].role != NodeRole::interior) continue;
      const StencilMap sm = stencil_nodes(dom, int(id));
      double uloc[19] = {0};
      const int ns = stencil_size(dom.dim, dom.kind);
      for (int sct = 0; sct < ns; ++sct)
        if (sm.avail[sct]) uloc[sct] = u[sm.node[sct]];
      if (dom.kind == GridKind::radial) {
        RadialKernel<double> k{dom, gc, eps, s, nullptr};
        k.freeze_at(int(id), sm, uloc, out);
      } else {
        CartesianKernel<double> k{dom, gc, eps, s, nullptr};
        k.freeze_at(int(id), sm, uloc, out);
      }
    }
  }
};

double sup_norm(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double l2_norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Eigen::VectorXd solve_linear(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                             double tol) {
  if (A.rows() <= 60000) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("linear solve breakdown (LU factorization)");
    return lu.solve(b);
  }
  Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it;
  it.preconditioner().setDroptol(1e-4);
  it.preconditioner().setFillfactor(12);
  it.setTolerance(std::max(tol, 1e-12));
  it.setMaxIterations(4000);
  it.compute(A);
  if (it.info() != Eigen::Success)
    throw std::runtime_error("linear solve breakdown (ILUT preconditioner)");
  Eigen::VectorXd x = it.solve(b);
  if (it.info() != Eigen::Success || !x.allFinite()) {
    // one retry with a stronger factorization
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it2;
    it2.preconditioner().setDroptol(1e-6);
    it2.preconditioner().setFillfactor(30);
    it2.setTolerance(std::max(tol, 1e-12));
    it2.setMaxIterations(8000);
    it2.compute(A);
    x = it2.solve(b);
    if (it2.info() != Eigen::Success || !x.allFinite())
      throw std::runtime_error("linear solve breakdown (BiCGSTAB stagnation)");
  }
  return x;
}

}  // namespace

std::vector<double> FlowSolver::residual(const std::vector<double>& u, double eps,
                                         double s) const {
  KernelDispatch kd{*dom_, cache_, eps, s, nullptr};
  std::vector<double> R;
  assemble(*dom_, kd, u, outer_bc(s), &R, nullptr);
  return R;
}

std::vector<double> FlowSolver::jacobian_times(const std::vector<double>& u, double eps,
                                               double s,
                                               const std::vector<double>& delta) const {
  KernelDispatch kd{*dom_, cache_, eps, s, nullptr};
  std::vector<double> R;
  std::vector<Eigen::Triplet<double>> trip;
  assemble(*dom_, kd, u, outer_bc(s), &R, &trip);
  const int n = int(dom_->nodes.size());
  Eigen::SparseMatrix<double> J(n, n);
  J.setFromTriplets(trip.begin(), trip.end());
  Eigen::Map<const Eigen::VectorXd> d(delta.data(), n);
  Eigen::VectorXd out = J * d;
  return std::vector<double>(out.data(), out.data() + n);
}

DiscreteScalarField FlowSolver::solve_impl(double eps, double s,
                                           const std::vector<double>* guess,
                                           bool record) const {
  const int n = int(dom_->nodes.size());
  std::vector<double> u = guess ? *guess : std::vector<double>(n, 0.0);
  if (int(u.size()) != n) throw std::invalid_argument("newton_solve: guess size mismatch");

  KernelDispatch kd{*dom_, cache_, eps, s, nullptr};
  std::vector<double> R;
  assemble(*dom_, kd, u, outer_bc(s), &R, nullptr);
  double norm = sup_norm(R);
  double merit = l2_norm(R);  // line-search merit; sup-norm stalls on plateaus
  double best_norm = norm;
  std::vector<double> best_u = u;

  int iter = 0, stalls = 0;
  bool converged = norm <= config_.newton_tol;
  while (!converged && iter < config_.max_iter) {
    ++iter;
    std::vector<Eigen::Triplet<double>> trip;
    assemble(*dom_, kd, u, outer_bc(s), &R, &trip);
    Eigen::SparseMatrix<double> J(n, n);
    J.setFromTriplets(trip.begin(), trip.end());
    Eigen::Map<const Eigen::VectorXd> rv(R.data(), n);
    Eigen::VectorXd step;
    try {
      step = solve_linear(J, -rv, config_.lin_tol);
    } catch (const std::runtime_error&) {
      if (stalls >= config_.picard_after_stalls) throw;
      ++stalls;
      step.setZero(n);
    }
    // keep early iterates inside the barrier envelope; far outside it the
    // nearly 1-homogeneous operator has spurious merit minima
    const double cap = std::max(1.0, std::abs(outer_bc(s))) + eps;
    double slope_scale = 1.0;  // Newton slope is -merit; capping rescales it
    if (step.size() == n) {
      const double mx = step.cwiseAbs().maxCoeff();
      if (mx > cap) {
        step *= cap / mx;
        slope_scale = cap / mx;
      }
    }

    auto try_direction = [&](const Eigen::VectorXd& dir, double slope) -> bool {
      double lambda = 1.0;
      for (int halve = 0; halve <= config_.max_halvings; ++halve) {
        std::vector<double> trial(u);
        for (int i = 0; i < n; ++i) trial[i] += lambda * dir[i];
        std::vector<double> Rt;
        assemble(*dom_, kd, trial, outer_bc(s), &Rt, nullptr);
        const double mt = l2_norm(Rt);
        if (std::isfinite(mt) && mt < (1.0 - 1e-4 * lambda * slope) * merit) {
          u = std::move(trial);
          R = std::move(Rt);
          norm = sup_norm(R);
          merit = mt;
          return true;
        }
        lambda *= 0.5;
      }
      return false;
    };

    bool advanced = step.size() == n && step.allFinite() && try_direction(step, slope_scale);
    if (!advanced) {
      ++stalls;
      if (stalls >= config_.picard_after_stalls) {
        // frozen-coefficient direction
        PicardFreeze fz;
        kd.freeze_all(u, &fz);
        KernelDispatch kp{*dom_, cache_, eps, s, &fz};
        std::vector<double> Rp;
        std::vector<Eigen::Triplet<double>> tripp;
        assemble(*dom_, kp, u, outer_bc(s), &Rp, &tripp);
        Eigen::SparseMatrix<double> Jp(n, n);
        Jp.setFromTriplets(tripp.begin(), tripp.end());
        Eigen::Map<const Eigen::VectorXd> rp(R.data(), n);
        Eigen::VectorXd pstep = solve_linear(Jp, -rp, config_.lin_tol);
        const double pmx = pstep.cwiseAbs().maxCoeff();
        if (pmx > cap) pstep *= cap / pmx;
        // frozen-coefficient slope is not -merit; ask only for plain decrease
        advanced = pstep.allFinite() && try_direction(pstep, 0.0);
      }
    }
    if (norm < best_norm) {
      best_norm = norm;
      best_u = u;
    }
    if (!advanced) break;
    converged = norm <= config_.newton_tol;
  }

  DiscreteScalarField f;
  f.dom = dom_;
  f.eps = eps;
  f.s = s;
  f.newton_iters = iter;
  if (!converged) {
    f.u = std::move(best_u);
    f.final_residual = best_norm;
    std::ostringstream os;
    os << "newton_solve: no convergence at eps=" << eps << " s=" << s << " after " << iter
       << " iterations (residual " << best_norm << ")";
    throw NonconvergenceError(os.str(), std::move(f));
  }
  f.u = std::move(u);
  f.final_residual = norm;
  if (record) {
    StageRecord rec;
    rec.eps = eps;
    rec.s = s;
    rec.residual_norm = f.final_residual;
    rec.iterations = f.newton_iters;
    rec.u = f.u;
    stages_.push_back(std::move(rec));
  }
  return f;
}

DiscreteScalarField FlowSolver::newton_solve(double eps, double s,
                                             const std::vector<double>* guess) const {
  return solve_impl(eps, s, guess, false);
}

DiscreteScalarField FlowSolver::homotopy_in_s(double eps, const std::vector<double>* guess) {
  DiscreteScalarField cur = solve_impl(eps, 0.0, guess, true);
  if (config_.s_steps < 1) throw std::invalid_argument("homotopy_in_s: s_steps < 1");
  const double base_step = 1.0 / config_.s_steps;
  double s_done = 0.0, step = base_step;
  int halvings = 0;
  while (s_done < 1.0 - 1e-12) {
    const double s_try = std::min(1.0, s_done + step);
    try {
      cur = solve_impl(eps, s_try, &cur.u, true);
      s_done = s_try;
      step = base_step;
      halvings = 0;
    } catch (NonconvergenceError& e) {
      ++halvings;
      if (halvings > 6) {
        std::ostringstream os;
        os << "homotopy_in_s: stage s=" << s_try << " failed after 6 bisections ("
           << e.what() << ")";
        throw NonconvergenceError(os.str(), std::move(e.best));
      }
      step *= 0.5;
    }
  }
  return cur;
}

std::vector<DiscreteScalarField> FlowSolver::continue_eps() {
  config_.validate();
  // below grid resolution the regularized profile cannot be represented
  const double floor = dom_->h / 4.0;
  if (config_.eps_schedule.back() < floor - 1e-12) {
    std::ostringstream os;
    os << "continue_eps: schedule floor " << config_.eps_schedule.back()
       << " is below h/4 = " << floor;
    throw std::invalid_argument(os.str());
  }
  skipped_head_eps_.clear();
  std::vector<DiscreteScalarField> fields;
  for (std::size_t i = 0; i < config_.eps_schedule.size(); ++i) {
    const double eps = config_.eps_schedule[i];
    const std::size_t stage_mark = stages_.size();
    try {
      if (fields.empty()) {
        fields.push_back(homotopy_in_s(eps));
      } else {
        fields.push_back(solve_impl(eps, 1.0, &fields.back().u, true));
      }
    } catch (NonconvergenceError& e) {
      stages_.resize(stage_mark);  // drop partial records of the failed march
      // The regularized problem is solvable only below a domain-dependent
      // threshold (the normalized-gradient flux through the boundary caps
      // eps * volume). Schedule entries above it are skipped while no stage
      // has converged yet; failures after a converged stage are real.
      if (fields.empty() && i + 1 < config_.eps_schedule.size()) {
        skipped_head_eps_.push_back(eps);
        continue;
      }
      std::ostringstream os;
      os << "continue_eps: schedule entry " << i << " (eps=" << eps << ") failed: "
         << e.what();
      throw NonconvergenceError(os.str(), std::move(e.best));
    }
  }
  return fields;
}

std::vector<double> residual_eps_s(const InitialDataSet& data, const AnnularDomain& dom,
                                   const std::vector<double>& u, double eps, double s) {
  if (!(eps > 0)) throw std::invalid_argument("residual_eps_s: eps must be positive");
  auto alias = std::shared_ptr<const AnnularDomain>(&dom, [](const AnnularDomain*) {});
  SolveConfig cfg;
  cfg.eps_schedule = {eps};
  FlowSolver solver(data, alias, cfg);
  return solver.residual(u, eps, s);
}

void write_checkpoint(const std::string& path, const DiscreteScalarField& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << "nullflow-checkpoint 1 eps " << format_double17(f.eps) << " s "
      << format_double17(f.s) << " residual " << format_double17(f.final_residual)
      << " iterations " << f.newton_iters << " nodes " << f.u.size() << "\n";
  for (double v : f.u) out << format_double17(v) << "\n";
}

DiscreteScalarField read_checkpoint(const std::string& path,
                                    std::shared_ptr<const AnnularDomain> dom) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::string magic, k;
  int version = 0;
  DiscreteScalarField f;
  std::size_t nodes = 0;
  in >> magic >> version;
  if (magic != "nullflow-checkpoint" || version != 1)
    throw std::runtime_error("bad checkpoint header: " + path);
  while (in >> k) {
    if (k == "eps") in >> f.eps;
    else if (k == "s") in >> f.s;
    else if (k == "residual") in >> f.final_residual;
    else if (k == "iterations") in >> f.newton_iters;
    else if (k == "nodes") {
      in >> nodes;
      break;
    }
  }
  f.u.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) in >> f.u[i];
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  if (dom && nodes != dom->nodes.size())
    throw std::runtime_error("checkpoint node count mismatch: " + path);
  f.dom = std::move(dom);
  return f;
}

}  // namespace nullflow
