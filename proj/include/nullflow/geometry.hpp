// Tensor calculus kernel: Christoffel symbols, level-set normal and null
// expansion, discrete field operators on masked grids, isosurface extraction
// (marching squares / tetrahedra), surface areas and bulk integrals.
#pragma once

#include <optional>
#include <vector>

#include "nullflow/core.hpp"
#include "nullflow/domain.hpp"
#include "nullflow/initial_data.hpp"

namespace nullflow {

struct DegenerateGradientError : std::runtime_error {
  explicit DegenerateGradientError(const std::string& w) : std::runtime_error(w) {}
};

inline constexpr double kGradFloor = 1e-10;

// Gamma^k_ij = 1/2 g^{kl} (g_il,j + g_jl,i - g_ij,l); t(k,i,j).
Ten3 christoffel(const InitialDataSet& data, const Vec& x);

struct ThetaValues {
  double H = 0, P = 0, theta_plus = 0;
  Vec normal{};  // contravariant unit normal nu^i
};

// Null expansion of the level set of an analytically known field through x,
// from its gradient and (coordinate) Hessian. Used for barrier functions and
// coordinate spheres.
ThetaValues levelset_theta_analytic(const InitialDataSet& data, const Vec& x,
                                    const Vec& grad, const Mat3& hess,
                                    double grad_floor = kGradFloor);

// Mean curvature of the coordinate sphere through x (outward normal).
double sphere_mean_curvature(const InitialDataSet& data, const Vec& x);

// ---------------------------------------------------------------------------
// Discrete fields on a domain. Values are nodal; operators use centered
// second-order differences, degrading to one-sided stencils at mask edges.

// Covariant gradient components du_i at a node (coordinate derivatives).
Vec grid_gradient(const AnnularDomain& dom, const std::vector<double>& u, int node);

// |grad u|_g at every node (0 is never returned below the true value; nodes
// with no usable stencil report 0).
std::vector<double> grid_gradient_norm(const AnnularDomain& dom, const InitialDataSet& data,
                                       const std::vector<double>& u);

// H = div(grad u / |grad u|), P, theta+ at a node; throws
// DegenerateGradientError below grad_floor. Computes the divergence as
// d_i nu^i + Gamma^i_{ik} nu^k on the discrete normal field.
ThetaValues levelset_H_P(const AnnularDomain& dom, const InitialDataSet& data,
                         const std::vector<double>& u, int node,
                         double grad_floor = kGradFloor);

// Residual of the exact level-set flow equation H + P - |grad u| at a node.
double residual_levelset(const AnnularDomain& dom, const InitialDataSet& data,
                         const std::vector<double>& u, int node,
                         double grad_floor = kGradFloor);

// Scalar graph over (a subset of) the base chart, representing graph(w) in
// M x R with the product metric; quantities reduce to base-chart operators
// because K is extended z-parallel.
struct GraphFunction {
  const AnnularDomain* dom = nullptr;
  std::vector<double> w;                 // finite on nodes with defined[n] != 0
  std::vector<std::uint8_t> defined;
};

// MOTS operator div(grad w / sqrt(1+|grad w|^2)) + (g~ - nu~ nu~)K at a node;
// zero iff graph(w) is a marginally outer trapped surface.
double residual_mots(const InitialDataSet& data, const GraphFunction& g, int node);

// Vertical-cylinder reduction: the MOTS residual of S x R equals theta+ of the
// base surface S; evaluated for the coordinate sphere of radius r.
double residual_mots_cylinder(const InitialDataSet& data, double r);

// ---------------------------------------------------------------------------
// Surfaces.

struct SurfaceSample {
  std::vector<Vec> points;
  std::vector<double> dmu;     // metric area elements
  std::vector<Vec> normal;     // contravariant g-unit normals
  std::vector<double> H, P, theta_plus;
};

double surface_area(const SurfaceSample& s);

// Lat-long / Fibonacci quadrature sample of the coordinate sphere |x| = r with
// metric area elements and analytic H, P.
SurfaceSample sphere_sample(const InitialDataSet& data, double r, int count);

// Isosurface {field == level} by marching segments (d=2) or marching
// tetrahedra (d=3) over grid cells whose corners are all carried by the mask;
// radial domains reduce to the interpolated crossing sphere. Samples carry
// interpolated normals from grad(field); H, P are filled from `nodal_theta`
// when provided (nearest-node interpolation).
SurfaceSample extract_level_set(const AnnularDomain& dom, const InitialDataSet& data,
                                const std::vector<double>& field, double level,
                                const std::vector<ThetaValues>* nodal_theta = nullptr);

// Perimeter |boundary F cap A| of a node-indicator set, measured by marching
// the 0.5 level of the indicator (metric lengths/areas). `window` limits the
// measured boundary to cells whose corners are all flagged.
double indicator_perimeter(const AnnularDomain& dom, const InitialDataSet& data,
                           const std::vector<std::uint8_t>& inside,
                           const std::vector<std::uint8_t>* window = nullptr);

// Metric volume carried by one node cell (octant weights and the radial
// shell measure included).
double node_volume(const AnnularDomain& dom, const InitialDataSet& data, int node);

// int_region (g^{ij} - nu^i nu^j) K_ij dV over a node set, with a caller
// supplied unit normal per node (covariant index raised internally).
double bulk_integral_P(const AnnularDomain& dom, const InitialDataSet& data,
                       const std::vector<int>& region_nodes,
                       const std::function<Vec(int)>& unit_normal);

// Projector trace (g^{ij} - nu^i nu^j) K_ij at a point for a g-unit normal.
double projector_trace_K(const InitialDataSet& data, const Vec& x, const Vec& unit_normal);

}  // namespace nullflow
