// Masked finite-difference domains for the annulus Omega_L = F_L \ closure(E_0):
// uniform Cartesian grids in d = 2, 3 (optionally one octant with reflection
// planes) and the spherically reduced 1D radial grid. Also the subsolution
// coefficient search that fixes the outer boundary {v = L}, v = alpha log r.
#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "nullflow/core.hpp"
#include "nullflow/initial_data.hpp"

namespace nullflow {

enum class GridKind { cartesian, radial };

enum class NodeRole { interior, inner_boundary, outer_boundary };

struct DomainNode {
  std::array<int, 3> ijk{0, 0, 0};
  Vec x{};
  NodeRole role = NodeRole::interior;
  // Boundary rows extrapolate linearly to the true boundary: the Dirichlet
  // value sits at distance bc_delta from the node toward (bc_axis, bc_sign),
  // and bc_neighbor is the opposite in-mask node used for the extrapolation.
  double bc_delta = 0.0;
  int bc_axis = -1;
  int bc_sign = 0;
  int bc_neighbor = -1;
};

struct AnnularDomain {
  GridKind kind = GridKind::cartesian;
  int dim = 3;
  double h = 0.1;
  double L = 1.0;
  double alpha_sub = 2.0;
  double inner_radius = 1.0;   // E0 ball radius (level-set masks keep the bound)
  double outer_radius = 2.0;   // exp(L / alpha_sub)
  bool octant = false;

  Vec origin{};
  std::array<int, 3> shape{1, 1, 1};
  std::vector<int> node_of_grid;  // flattened grid index -> node id or -1
  std::vector<DomainNode> nodes;
  std::vector<int> interior_ids, inner_ids, outer_ids;

  std::size_t grid_index(int i, int j, int k) const {
    return (std::size_t(k) * shape[1] + j) * shape[0] + i;
  }

  // Node id at grid coords, applying octant reflection; -1 when unmasked.
  int node_at(int i, int j, int k) const {
    if (octant) {
      if (i < 0) i = -i;
      if (j < 0) j = -j;
      if (k < 0) k = -k;
    }
    if (i < 0 || j < 0 || k < 0 || i >= shape[0] || j >= shape[1] || k >= shape[2])
      return -1;
    return node_of_grid[grid_index(i, j, k)];
  }

  int neighbor(int node, int axis, int sign) const {
    const auto& c = nodes[node].ijk;
    int i = c[0], j = c[1], k = c[2];
    (axis == 0 ? i : axis == 1 ? j : k) += sign;
    return node_at(i, j, k);
  }

  double cell_volume() const {
    double v = 1;
    for (int a = 0; a < dim; ++a) v *= h;
    return v;
  }
};

// Per-node / per-face metric data, evaluated once so that residual and
// Jacobian assembly stay pure arithmetic.
struct GeometryCache {
  int dim = 3;
  // node data, 6 entries per symmetric matrix (00,01,02,11,12,22)
  std::vector<double> ginv, K;
  std::vector<double> sqrtg;
  // face data between node and its +axis neighbor, indexed node*dim + axis
  std::vector<double> face_ginv;  // 6 per face
  std::vector<double> face_sqrtg;
  std::vector<std::uint8_t> face_ok;
  // radial reduction (kind == radial): per node and per +face
  std::vector<double> r_sqrt_grr, r_area, r_kt, r_kn;
  std::vector<double> rf_sqrt_grr, rf_area;

  static GeometryCache build(const AnnularDomain& dom, const InitialDataSet& data);
};

// Largest alpha on a fixed search grid such that v = alpha log r has
// nonnegative residual for the s-modified level-set operator at
// s in {0, 1/2, 1} on sampled radii in [r_min, r_max].
double choose_alpha_subsolution(const InitialDataSet& data, double r_min, double r_max);

// Build the masked annulus. For kind == radial the grid is the 1D radial mesh
// r = r0 + i h. e0_levelset (optional) masks E0 = {levelset < 0} instead of a
// coordinate ball; the inner Dirichlet surface is its zero set.
AnnularDomain build_domain(const InitialDataSet& data, double e0_radius, double L, double h,
                           GridKind kind, double alpha_sub, bool octant = false,
                           const std::function<double(const Vec&)>& e0_levelset = nullptr);

}  // namespace nullflow
