#include "nullflow/weak_flow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>
#include <tuple>

namespace nullflow {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Vec raise_unit(const InitialDataSet& data, const Vec& x, const Vec& cov, int dim) {
  const Mat3 gi = data.metric_inv(x);
  Vec up{};
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) up[i] += gi(i, j) * cov[j];
  const double nrm = covector_norm(cov, gi, dim);
  for (int i = 0; i < dim; ++i) up[i] /= nrm;
  return up;
}

}  // namespace

WeakSolution extract_limit(std::vector<DiscreteScalarField> fields) {
  if (fields.empty()) throw std::invalid_argument("extract_limit: no fields");
  for (const auto& f : fields)
    if (f.dom != fields.front().dom || f.u.size() != fields.front().u.size())
      throw std::invalid_argument("extract_limit: fields live on different domains");
  WeakSolution ws;
  ws.dom = fields.front().dom;
  ws.u = fields.back().u;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    double gap = 0;
    for (std::size_t k = 0; k < ws.u.size(); ++k)
      gap = std::max(gap, std::abs(fields[i].u[k] - fields[i - 1].u[k]));
    ws.cauchy_gaps.push_back(gap);
  }
  ws.cauchy_warning = ws.cauchy_gaps.size() < 1;
  for (std::size_t i = 1; i < ws.cauchy_gaps.size(); ++i)
    if (ws.cauchy_gaps[i] > 0.9 * ws.cauchy_gaps[i - 1] &&
        ws.cauchy_gaps[i] > 1e-12)
      ws.cauchy_warning = true;
  ws.eps_fields = std::move(fields);
  return ws;
}

double default_plateau_tol(const WeakSolution& ws) {
  if (ws.cauchy_gaps.empty()) return 1e-3;
  return std::max(3.0 * ws.cauchy_gaps.back(), 1e-10);
}

double default_grad_tol(const AnnularDomain& dom) { return 10.0 * dom.h; }

std::vector<JumpRegion>& detect_plateaus(WeakSolution& ws, const InitialDataSet& data,
                                         double plateau_tol, double grad_tol) {
  ws.plateau_tol = plateau_tol;
  ws.grad_tol = grad_tol;
  ws.jumps.clear();
  ws.truncation_plateau_nodes = 0;
  if (!(plateau_tol > 0) || !(grad_tol > 0)) return ws.jumps;

  const AnnularDomain& dom = *ws.dom;
  const std::vector<double> gn = grid_gradient_norm(dom, data, ws.u);
  std::vector<std::uint8_t> flat(dom.nodes.size(), 0);
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) flat[i] = gn[i] <= grad_tol;

  std::vector<int> comp(dom.nodes.size(), -1);
  int ncomp = 0;
  for (int seed = 0; seed < int(dom.nodes.size()); ++seed) {
    if (!flat[seed] || comp[seed] >= 0) continue;
    std::deque<int> queue{seed};
    comp[seed] = ncomp;
    std::vector<int> members;
    while (!queue.empty()) {
      const int id = queue.front();
      queue.pop_front();
      members.push_back(id);
      for (int a = 0; a < dom.dim; ++a)
        for (int sg : {-1, +1}) {
          const int nb = dom.neighbor(id, a, sg);
          if (nb >= 0 && flat[nb] && comp[nb] < 0) {
            comp[nb] = ncomp;
            queue.push_back(nb);
          }
        }
    }
    ++ncomp;

    // extent >= 2h in some axis
    int lo[3] = {1 << 30, 1 << 30, 1 << 30}, hi[3] = {-(1 << 30), -(1 << 30), -(1 << 30)};
    bool touches_inner = false, touches_outer = false;
    for (int id : members) {
      for (int a = 0; a < dom.dim; ++a) {
        lo[a] = std::min(lo[a], dom.nodes[id].ijk[a]);
        hi[a] = std::max(hi[a], dom.nodes[id].ijk[a]);
      }
      if (dom.nodes[id].role == NodeRole::inner_boundary) touches_inner = true;
      if (dom.nodes[id].role == NodeRole::outer_boundary ||
          norm(dom.nodes[id].x, dom.dim) >= dom.outer_radius - 2 * dom.h)
        touches_outer = true;
    }
    int extent = 0;
    for (int a = 0; a < dom.dim; ++a) extent = std::max(extent, hi[a] - lo[a]);
    if (extent < 2) continue;
    if (touches_outer && !touches_inner) {
      // artifact of the finite domain: the outer Dirichlet datum flattens u
      // near the cutoff sphere
      ws.truncation_plateau_nodes += int(members.size());
      continue;
    }
    JumpRegion region;
    std::sort(members.begin(), members.end());
    region.nodes = std::move(members);
    region.touches_inner = touches_inner;
    if (touches_inner) {
      region.t0 = 0.0;
    } else {
      std::vector<double> vals;
      vals.reserve(region.nodes.size());
      for (int id : region.nodes) vals.push_back(ws.u[id]);
      region.t0 = median_of(std::move(vals));
    }
    ws.jumps.push_back(std::move(region));
  }
  std::sort(ws.jumps.begin(), ws.jumps.end(),
            [](const JumpRegion& a, const JumpRegion& b) { return a.t0 < b.t0; });
  return ws.jumps;
}

void jump_graph(WeakSolution& ws, const InitialDataSet& data, JumpRegion& region,
                double cyl_threshold) {
  if (region.nodes.empty()) {
    region.graph_built = true;
    region.graph.dom = ws.dom.get();
    return;
  }
  const AnnularDomain& dom = *ws.dom;
  const DiscreteScalarField& fine = ws.eps_fields.back();
  const double eps = fine.eps;

  // plateau plus a 3-cell dilation, enough to read the cylinder locus
  std::vector<std::uint8_t> in_set(dom.nodes.size(), 0);
  std::deque<std::pair<int, int>> queue;
  for (int id : region.nodes) {
    in_set[id] = 1;
    queue.emplace_back(id, 0);
  }
  while (!queue.empty()) {
    auto [id, depth] = queue.front();
    queue.pop_front();
    if (depth >= 3) continue;
    for (int a = 0; a < dom.dim; ++a)
      for (int sg : {-1, +1}) {
        const int nb = dom.neighbor(id, a, sg);
        if (nb >= 0 && !in_set[nb]) {
          in_set[nb] = 1;
          queue.emplace_back(nb, depth + 1);
        }
      }
  }

  GraphFunction& g = region.graph;
  g.dom = ws.dom.get();
  g.w.assign(dom.nodes.size(), 0.0);
  g.defined.assign(dom.nodes.size(), 0);
  for (std::size_t i = 0; i < dom.nodes.size(); ++i)
    if (in_set[i]) {
      g.w[i] = fine.u[i] / eps;
      g.defined[i] = 1;
    }
  // anchor at the innermost plateau node
  int anchor = region.nodes.front();
  for (int id : region.nodes)
    if (norm(dom.nodes[id].x, dom.dim) < norm(dom.nodes[anchor].x, dom.dim) - 1e-15)
      anchor = id;
  const double w0 = g.w[anchor];
  for (std::size_t i = 0; i < dom.nodes.size(); ++i)
    if (g.defined[i]) g.w[i] -= w0;

  // classification by |grad w-hat|
  std::vector<double> wg(dom.nodes.size(), 0.0);
  double wg_max = 0;
  int steepest = region.nodes.front();
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
    if (!in_set[i]) continue;
    if (dom.kind == GridKind::radial) {
      const Vec dw = grid_gradient(dom, g.w, int(i));
      const Mat3 gm = data.metric(dom.nodes[i].x);
      wg[i] = std::abs(dw[0]) / std::sqrt(gm(0, 0));
    } else {
      wg[i] = covector_norm(grid_gradient(dom, g.w, int(i)),
                            data.metric_inv(dom.nodes[i].x), dom.dim);
    }
    if (wg[i] > wg_max) {
      wg_max = wg[i];
      steepest = int(i);
    }
  }
  region.cylinder_locus_radius = norm(dom.nodes[steepest].x, dom.dim);
  region.steepest_node = steepest;
  region.cylindrical.assign(region.nodes.size(), 0);
  int ncyl = 0;
  for (std::size_t k = 0; k < region.nodes.size(); ++k) {
    region.cylindrical[k] = wg[region.nodes[k]] > cyl_threshold;
    ncyl += region.cylindrical[k];
  }
  region.graph_fraction =
      1.0 - double(ncyl) / double(std::max<std::size_t>(1, region.nodes.size()));

  // MOTS operator statistics over the graphical part
  const int naxes = (dom.kind == GridKind::radial) ? 1 : dom.dim;
  double sup = 0, mean = 0;
  int counted = 0;
  for (std::size_t k = 0; k < region.nodes.size(); ++k) {
    if (region.cylindrical[k]) continue;
    const int id = region.nodes[k];
    bool full = true;
    for (int a = 0; a < naxes && full; ++a)
      for (int sg : {-1, +1}) {
        const int nb = dom.neighbor(id, a, sg);
        if (nb < 0 || !g.defined[nb]) {
          full = false;
          break;
        }
      }
    if (!full) continue;
    try {
      const double res = std::abs(residual_mots(data, g, id));
      sup = std::max(sup, res);
      mean += res;
      ++counted;
    } catch (const std::exception&) {
    }
  }
  region.mots_residual_sup = sup;
  region.mots_residual_mean = counted ? mean / counted : 0.0;
  region.graph_built = true;
}

void compute_flow_normals(WeakSolution& ws, const InitialDataSet& data) {
  const AnnularDomain& dom = *ws.dom;
  ws.normal.assign(dom.nodes.size(), Vec{});
  ws.normal_ok.assign(dom.nodes.size(), 0);
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
    const Vec du = grid_gradient(dom, ws.u, int(i));
    double sz = 0;
    for (int a = 0; a < dom.dim; ++a) sz = std::max(sz, std::abs(du[a]));
    if (sz < 1e-14) continue;
    if (dom.kind == GridKind::radial) {
      const Mat3 gm = data.metric(dom.nodes[i].x);
      ws.normal[i] = Vec{(du[0] > 0 ? 1.0 : -1.0) / std::sqrt(gm(0, 0)), 0, 0};
    } else {
      ws.normal[i] = raise_unit(data, dom.nodes[i].x, du, dom.dim);
    }
    ws.normal_ok[i] = 1;
  }
  // nearest-neighbour propagation into exactly-flat spots
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
      if (ws.normal_ok[i]) continue;
      for (int a = 0; a < dom.dim; ++a)
        for (int sg : {-1, +1}) {
          const int nb = dom.neighbor(int(i), a, sg);
          if (nb >= 0 && ws.normal_ok[nb]) {
            ws.normal[i] = ws.normal[nb];
            ws.normal_ok[i] = 1;
            changed = true;
            a = dom.dim;
            break;
          }
        }
    }
  }
}

ThetaValues theta_from_normals(const WeakSolution& ws, const InitialDataSet& data, int node) {
  const AnnularDomain& dom = *ws.dom;
  if (!ws.normal_ok.empty() && !ws.normal_ok[node])
    throw std::runtime_error("theta_from_normals: normal unavailable at node");
  const Vec x = dom.nodes[node].x;
  ThetaValues tv;
  tv.normal = ws.normal[node];
  if (dom.kind == GridKind::radial) {
    const Mat3 g = data.metric(x);
    const Ten3 dg = data.metric_deriv(x);
    const Mat3 K = data.extrinsic(x);
    const int n = data.n();
    const double r = x[0];
    const double a = g(1, 1), da = dg(1, 1, 0);
    const double area = std::pow(r, n) * std::pow(a, n / 2.0);
    const double darea =
        std::pow(r, n - 1) * std::pow(a, n / 2.0 - 1) * (n * a + 0.5 * n * r * da);
    const double sign = ws.normal[node][0] >= 0 ? 1.0 : -1.0;
    tv.H = sign * darea / (std::sqrt(g(0, 0)) * area);
    tv.P = n * K(1, 1) / a;
    tv.theta_plus = tv.H + tv.P;
    return tv;
  }
  double divergence = 0;
  for (int a = 0; a < dom.dim; ++a) {
    const int p = dom.neighbor(node, a, +1);
    const int m = dom.neighbor(node, a, -1);
    const bool hp = p >= 0 && ws.normal_ok[p], hm = m >= 0 && ws.normal_ok[m];
    if (hp && hm)
      divergence += (ws.normal[p][a] - ws.normal[m][a]) / (2 * dom.h);
    else if (hp)
      divergence += (ws.normal[p][a] - ws.normal[node][a]) / dom.h;
    else if (hm)
      divergence += (ws.normal[node][a] - ws.normal[m][a]) / dom.h;
  }
  const Mat3 gi = data.metric_inv(x);
  const Ten3 dg = data.metric_deriv(x);
  for (int k = 0; k < dom.dim; ++k) {
    double tr = 0;
    for (int i = 0; i < dom.dim; ++i)
      for (int l = 0; l < dom.dim; ++l) tr += gi(i, l) * dg(i, l, k);
    divergence += 0.5 * tr * ws.normal[node][k];
  }
  tv.H = divergence;
  tv.P = projector_trace_K(data, x, ws.normal[node]);
  tv.theta_plus = tv.H + tv.P;
  return tv;
}

std::vector<ThetaValues> nodal_theta_table(WeakSolution& ws, const InitialDataSet& data) {
  if (ws.normal.empty()) compute_flow_normals(ws, data);
  const AnnularDomain& dom = *ws.dom;
  const std::vector<double> gn = grid_gradient_norm(dom, data, ws.u);
  const double alive = std::max(kGradFloor, ws.grad_tol);
  std::vector<ThetaValues> table(dom.nodes.size());
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
    try {
      if (gn[i] > alive)
        table[i] = levelset_H_P(dom, data, ws.u, int(i));
      else
        table[i] = theta_from_normals(ws, data, int(i));
    } catch (const std::exception&) {
      table[i] = ThetaValues{};
    }
  }
  return table;
}

namespace {

// Outermost sign change of the measured nodal theta+ over the jump region and
// a small dilation: the marginally trapped radius, to second order in h, with
// the arrival-time level interpolated at the same spot.
struct ThetaCrossing {
  bool found = false;
  double radius = 0, level = 0;
};

ThetaCrossing theta_zero_crossing(const WeakSolution& ws, const JumpRegion& region,
                                  const std::vector<ThetaValues>& theta) {
  const AnnularDomain& dom = *ws.dom;
  std::vector<std::uint8_t> in_set(dom.nodes.size(), 0);
  std::deque<std::pair<int, int>> queue;
  for (int id : region.nodes) {
    in_set[id] = 1;
    queue.emplace_back(id, 0);
  }
  while (!queue.empty()) {
    auto [id, depth] = queue.front();
    queue.pop_front();
    if (depth >= 3) continue;
    for (int a = 0; a < dom.dim; ++a)
      for (int sg : {-1, +1}) {
        const int nb = dom.neighbor(id, a, sg);
        if (nb >= 0 && !in_set[nb]) {
          in_set[nb] = 1;
          queue.emplace_back(nb, depth + 1);
        }
      }
  }
  std::vector<std::tuple<double, double, double>> prof;  // radius, theta, u
  for (std::size_t i = 0; i < dom.nodes.size(); ++i)
    if (in_set[i])
      prof.emplace_back(norm(dom.nodes[i].x, dom.dim), theta[i].theta_plus, ws.u[i]);
  std::sort(prof.begin(), prof.end());
  // bin-average against angular scatter on Cartesian grids
  std::vector<std::array<double, 3>> binned;
  const double bin = 0.5 * dom.h;
  for (std::size_t i = 0; i < prof.size();) {
    double r0 = std::get<0>(prof[i]), sr = 0, st = 0, su = 0;
    int cnt = 0;
    while (i < prof.size() && std::get<0>(prof[i]) <= r0 + bin) {
      sr += std::get<0>(prof[i]);
      st += std::get<1>(prof[i]);
      su += std::get<2>(prof[i]);
      ++cnt;
      ++i;
    }
    binned.push_back({sr / cnt, st / cnt, su / cnt});
  }
  ThetaCrossing cross;
  for (std::size_t k = 0; k + 1 < binned.size(); ++k) {
    const double t0 = binned[k][1], t1 = binned[k + 1][1];
    if (!(t0 < 0.0) || !(t1 >= 0.0)) continue;
    const double w = t0 / (t0 - t1);
    cross.found = true;
    cross.radius = binned[k][0] + w * (binned[k + 1][0] - binned[k][0]);
    cross.level = binned[k][2] + w * (binned[k + 1][2] - binned[k][2]);
  }
  return cross;
}

}  // namespace

std::vector<MotsCandidate> mots_candidates(WeakSolution& ws, const InitialDataSet& data) {
  std::vector<MotsCandidate> out;
  if (ws.normal.empty()) compute_flow_normals(ws, data);
  const auto theta = nodal_theta_table(ws, data);
  for (auto& region : ws.jumps) {
    if (!region.graph_built) jump_graph(ws, data, region);
    MotsCandidate cand;
    cand.t0 = region.t0;
    // The boundary of {u > t0} hugs the marginally trapped surface; the sign
    // change of the measured theta+ locates it to second order, while fixed
    // offsets above t0 drift with the regularization scale.
    const ThetaCrossing cross = theta_zero_crossing(ws, region, theta);
    double level = region.t0 + 0.05 * ws.last_eps();
    if (cross.found) level = std::max(level, cross.level);
    else if (region.steepest_node >= 0)
      level = std::max(level, ws.u[region.steepest_node]);
    cand.surface = extract_level_set(*ws.dom, data, ws.u, level, &theta);
    for (double th : cand.surface.theta_plus)
      cand.sup_abs_theta = std::max(cand.sup_abs_theta, std::abs(th));
    cand.radius_estimate = cross.found ? cross.radius : region.cylinder_locus_radius;
    cand.mots_residual_sup = region.mots_residual_sup;
    cand.plateau_nodes = int(region.nodes.size());
    cand.graph_fraction = region.graph_fraction;
    out.push_back(std::move(cand));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy and outward checks.

double energy_J(const InitialDataSet& data, const WeakSolution& ws,
                const std::vector<std::uint8_t>& F, const std::vector<std::uint8_t>& A) {
  const AnnularDomain& dom = *ws.dom;
  if (F.size() != dom.nodes.size() || A.size() != dom.nodes.size())
    throw std::invalid_argument("energy_J: indicator size mismatch");
  if (ws.normal.empty())
    throw std::runtime_error("energy_J: flow normals not built");
  const double perim = indicator_perimeter(dom, data, F, &A);
  const std::vector<double> gn = grid_gradient_norm(dom, data, ws.u);
  double bulk = 0;
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
    if (!F[i] || !A[i]) continue;
    if (!ws.normal_ok[i])
      throw std::runtime_error("energy_J: normal unavailable on the bulk region");
    const double P = projector_trace_K(data, dom.nodes[i].x, ws.normal[i]);
    bulk += (gn[i] - P) * node_volume(dom, data, int(i));
  }
  return perim - bulk;
}

OutwardReport outward_check(const InitialDataSet& data, const WeakSolution& ws,
                            const std::vector<std::uint8_t>& E,
                            const std::vector<std::vector<std::uint8_t>>& competitors,
                            const std::vector<std::string>& labels) {
  const AnnularDomain& dom = *ws.dom;
  if (E.size() != dom.nodes.size())
    throw std::invalid_argument("outward_check: indicator size mismatch");
  if (ws.normal.empty())
    throw std::runtime_error("outward_check: flow normals not built");
  OutwardReport rep;
  const double perim_E = indicator_perimeter(dom, data, E, nullptr);

  double kappa = 0;
  const int stride = std::max<std::size_t>(1, dom.nodes.size() / 4096);
  for (std::size_t i = 0; i < dom.nodes.size(); i += stride)
    kappa = std::max(kappa, largest_abs_eigenvalue_rel(data.extrinsic(dom.nodes[i].x),
                                                       data.metric(dom.nodes[i].x), dom.dim));
  rep.lambda = data.n() * kappa;
  rep.slack = 10.0 * dom.h * std::max(1.0, perim_E);

  rep.worst_margin = std::numeric_limits<double>::infinity();
  rep.worst_lambda_margin = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < competitors.size(); ++c) {
    const auto& F = competitors[c];
    if (F.size() != E.size())
      throw std::invalid_argument("outward_check: competitor size mismatch");
    CompetitorMargin row;
    row.label = c < labels.size() ? labels[c] : "competitor";
    double bulk = 0, vol = 0;
    for (std::size_t i = 0; i < E.size(); ++i) {
      if (E[i] && !F[i])
        throw std::invalid_argument("outward_check: competitor is not a superset");
      if (F[i] && !E[i]) {
        if (!ws.normal_ok[i])
          throw std::runtime_error("outward_check: normal unavailable on F \\ E");
        const double w = node_volume(dom, data, int(i));
        bulk += projector_trace_K(data, dom.nodes[i].x, ws.normal[i]) * w;
        vol += w;
        ++row.added_nodes;
      }
    }
    const double perim_F = indicator_perimeter(dom, data, F, nullptr);
    row.margin = perim_F + bulk - perim_E;
    row.lambda_margin = perim_F + rep.lambda * vol - perim_E;
    rep.worst_margin = std::min(rep.worst_margin, row.margin);
    rep.worst_lambda_margin = std::min(rep.worst_lambda_margin, row.lambda_margin);
    rep.rows.push_back(std::move(row));
  }
  if (competitors.empty()) rep.worst_margin = rep.worst_lambda_margin = 0.0;
  rep.optimizing = rep.worst_margin >= -rep.slack;
  return rep;
}

std::vector<std::uint8_t> ball_indicator(const AnnularDomain& dom, double rho) {
  std::vector<std::uint8_t> ind(dom.nodes.size(), 0);
  for (std::size_t i = 0; i < dom.nodes.size(); ++i)
    ind[i] = norm(dom.nodes[i].x, dom.dim) < rho;
  return ind;
}

std::vector<std::uint8_t> sublevel_indicator(const WeakSolution& ws, double t) {
  std::vector<std::uint8_t> ind(ws.u.size(), 0);
  for (std::size_t i = 0; i < ws.u.size(); ++i) ind[i] = ws.u[i] < t;
  return ind;
}

std::vector<std::vector<std::uint8_t>> radial_competitors(const AnnularDomain& dom,
                                                          const std::vector<std::uint8_t>& E,
                                                          int count) {
  double r_e = dom.inner_radius;
  for (std::size_t i = 0; i < E.size(); ++i)
    if (E[i]) r_e = std::max(r_e, norm(dom.nodes[i].x, dom.dim));
  const double r_top = 0.9 * dom.outer_radius;
  std::vector<std::vector<std::uint8_t>> out;
  for (int k = 1; k <= count; ++k) {
    const double rho = r_e + (r_top - r_e) * double(k) / count;
    auto F = ball_indicator(dom, rho);
    for (std::size_t i = 0; i < E.size(); ++i) F[i] = F[i] || E[i];
    out.push_back(std::move(F));
  }
  return out;
}

std::vector<std::uint8_t> dilate_indicator(const AnnularDomain& dom,
                                           const std::vector<std::uint8_t>& E, int cells) {
  std::vector<std::uint8_t> cur = E;
  for (int pass = 0; pass < cells; ++pass) {
    std::vector<std::uint8_t> next = cur;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (!cur[i]) continue;
      for (int a = 0; a < dom.dim; ++a)
        for (int sg : {-1, +1}) {
          const int nb = dom.neighbor(int(i), a, sg);
          if (nb >= 0) next[nb] = 1;
        }
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<std::vector<std::uint8_t>> blob_competitors(const AnnularDomain& dom,
                                                        const std::vector<std::uint8_t>& E,
                                                        int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> eligible;
  for (std::size_t i = 0; i < dom.nodes.size(); ++i)
    if (!E[i] && norm(dom.nodes[i].x, dom.dim) < 0.85 * dom.outer_radius)
      eligible.push_back(int(i));
  std::vector<std::vector<std::uint8_t>> out;
  for (int k = 0; k < count && !eligible.empty(); ++k) {
    const int center = eligible[rng.uniform_int(int(eligible.size()))];
    const double radius = dom.h * (1.0 + 2.0 * rng.uniform());
    auto F = E;
    const Vec c = dom.nodes[center].x;
    for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
      Vec d;
      for (int a = 0; a < 3; ++a) d[a] = dom.nodes[i].x[a] - c[a];
      if (norm(d, dom.dim) <= radius) F[i] = 1;
    }
    out.push_back(std::move(F));
  }
  return out;
}

HullIdentityResult hull_identity_check(const InitialDataSet& data, const WeakSolution& ws,
                                       double t) {
  HullIdentityResult res;
  const double tol = std::max(ws.plateau_tol, 1e-12);
  const JumpRegion* region = nullptr;
  for (const auto& j : ws.jumps)
    if (std::abs(j.t0 - t) <= tol) region = &j;
  if (!region) {
    res.applicable = false;
    res.residual = 0.0;
    res.note = "no jump at this time; E_t and its hull coincide";
    return res;
  }
  if (region->t0 <= tol) {
    res.applicable = false;
    res.note =
        "jump at t = 0: the identity requires an outward-optimising initial region";
    return res;
  }
  WeakSolution& mws = const_cast<WeakSolution&>(ws);
  if (ws.normal.empty()) compute_flow_normals(mws, data);
  const AnnularDomain& dom = *ws.dom;

  // The regularized field is strictly monotone, so {u < t0} and {u > t0}
  // share one crossing. Extract at t0 -+ delta and Richardson-extrapolate
  // delta -> 0: the bias is linear in delta with slope -(|bd E| + |bd E^+|).
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  for (int id : region->nodes) {
    umin = std::min(umin, ws.u[id]);
    umax = std::max(umax, ws.u[id]);
  }
  const double delta = 0.5 * (umax - umin) + 1.5 * ws.last_eps();

  if (dom.kind == GridKind::radial) {
    auto crossing = [&](double level) -> double {
      for (std::size_t i = 0; i + 1 < dom.nodes.size(); ++i) {
        const double fa = ws.u[i] - level, fb = ws.u[i + 1] - level;
        if ((fa < 0) == (fb < 0)) continue;
        return dom.nodes[i].x[0] + dom.h * fa / (fa - fb);
      }
      return -1.0;
    };
    auto area_at = [&](double r) {
      return surface_area(sphere_sample(data, r, dom.dim == 2 ? 64 : 256));
    };
    auto bulk_between = [&](double r_in, double r_out) {
      return integrate(
          [&](double r) {
            const Vec x{r, 0, 0};
            const Mat3 g = data.metric(x);
            const Mat3 K = data.extrinsic(x);
            const int n = data.n();
            const double c = (n == 1) ? 2 * kPi : 4 * kPi;
            const double area = c * std::pow(r, n) * std::pow(g(1, 1), n / 2.0);
            const double P = n * K(1, 1) / g(1, 1);
            return P * std::sqrt(g(0, 0)) * area;
          },
          r_in, r_out, 1e-10);
    };
    double r_in[2], r_out[2], resd[2];
    for (int k = 0; k < 2; ++k) {
      const double d = delta * (k + 1);
      r_in[k] = crossing(region->t0 - d);
      r_out[k] = crossing(region->t0 + d);
      if (r_in[k] < 0 || r_out[k] < 0 || r_out[k] <= r_in[k]) {
        res.applicable = false;
        res.note = "level sets not extractable on both sides of the jump";
        return res;
      }
      resd[k] = area_at(r_in[k]) - area_at(r_out[k]) - bulk_between(r_in[k], r_out[k]);
    }
    res.area_inner = area_at(r_in[0]);
    res.area_outer = area_at(r_out[0]);
    res.bulk = bulk_between(r_in[0], r_out[0]);
    res.residual = 2.0 * resd[0] - resd[1];
    res.applicable = true;
    return res;
  }

  auto residual_at = [&](double d) -> std::optional<double> {
    const SurfaceSample inner = extract_level_set(dom, data, ws.u, region->t0 - d, nullptr);
    const SurfaceSample outer = extract_level_set(dom, data, ws.u, region->t0 + d, nullptr);
    if (inner.dmu.empty() || outer.dmu.empty()) return std::nullopt;
    double bulk = 0;
    for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
      if (ws.u[i] <= region->t0 - d || ws.u[i] >= region->t0 + d) continue;
      if (!ws.normal_ok[i]) continue;
      bulk += projector_trace_K(data, dom.nodes[i].x, ws.normal[i]) *
              node_volume(dom, data, int(i));
    }
    const double ai = surface_area(inner), ao = surface_area(outer);
    if (d == delta) {
      res.area_inner = ai;
      res.area_outer = ao;
      res.bulk = bulk;
    }
    return ai - ao - bulk;
  };
  const auto r1 = residual_at(delta), r2 = residual_at(2 * delta);
  if (!r1 || !r2) {
    res.applicable = false;
    res.note = "level sets not extractable on both sides of the jump";
    return res;
  }
  res.residual = 2.0 * *r1 - *r2;
  res.applicable = true;
  return res;
}

ExtremumScan scan_strict_extrema(const AnnularDomain& dom, const std::vector<double>& u) {
  ExtremumScan scan;
  scan.pass = true;
  for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
    if (dom.nodes[i].role != NodeRole::interior) continue;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    int nnb = 0;
    for (int a = 0; a < dom.dim; ++a)
      for (int sg : {-1, +1}) {
        const int nb = dom.neighbor(int(i), a, sg);
        if (nb < 0) continue;
        lo = std::min(lo, u[nb]);
        hi = std::max(hi, u[nb]);
        ++nnb;
      }
    if (nnb == 0) continue;
    if (u[i] > hi || u[i] < lo) {
      scan.pass = false;
      scan.witness = int(i);
      return scan;
    }
  }
  return scan;
}

std::vector<FlowDiagnosticsRow> diagnostics_table(WeakSolution& ws,
                                                  const InitialDataSet& data,
                                                  const std::vector<double>& t_samples) {
  const AnnularDomain& dom = *ws.dom;
  if (ws.normal.empty()) compute_flow_normals(ws, data);
  const auto theta = nodal_theta_table(ws, data);

  // cumulative bulk over nodes ordered by arrival time
  std::vector<int> order(dom.nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&ws](int a, int b) { return ws.u[a] < ws.u[b]; });
  std::vector<double> ucut(order.size()), prefix(order.size() + 1, 0.0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int id = order[k];
    ucut[k] = ws.u[id];
    const double P = ws.normal_ok[id]
                         ? projector_trace_K(data, dom.nodes[id].x, ws.normal[id])
                         : 0.0;
    prefix[k + 1] = prefix[k] + P * node_volume(dom, data, id);
  }
  auto bulk_below = [&](double t) {
    const auto it = std::lower_bound(ucut.begin(), ucut.end(), t);
    return prefix[std::size_t(it - ucut.begin())];
  };

  std::vector<FlowDiagnosticsRow> rows;
  std::vector<double> areas(t_samples.size(), 0.0);
  for (std::size_t k = 0; k < t_samples.size(); ++k) {
    FlowDiagnosticsRow row;
    row.t = t_samples[k];
    const SurfaceSample s = extract_level_set(dom, data, ws.u, row.t, &theta);
    row.area = s.dmu.empty() ? 0.0 : surface_area(s);
    areas[k] = row.area;
    row.bulk_P = bulk_below(row.t);
    row.min_theta_plus = std::numeric_limits<double>::infinity();
    for (double th : s.theta_plus) row.min_theta_plus = std::min(row.min_theta_plus, th);
    if (s.theta_plus.empty()) row.min_theta_plus = 0.0;
    for (const auto& j : ws.jumps)
      if (std::abs(j.t0 - row.t) <= std::max(ws.plateau_tol, 1e-12)) row.jump_flag = 1;
    rows.push_back(row);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k == 0 || k + 1 == rows.size() || rows[k].area == 0.0 || rows[k].jump_flag) {
      rows[k].monotonicity_residual = 0.0;
      continue;
    }
    const double dA = (areas[k + 1] - areas[k - 1]) / (rows[k + 1].t - rows[k - 1].t);
    rows[k].monotonicity_residual =
        (dA + rows[k].bulk_P - rows[k].area) / std::max(1e-12, std::abs(rows[k].area));
  }
  return rows;
}

}  // namespace nullflow
