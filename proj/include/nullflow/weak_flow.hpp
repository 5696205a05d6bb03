// Weak limit of the regularized family: the arrival-time field u, plateau
// (jump) regions with their graph/cylinder structure, candidate trapped
// surfaces, the area-plus-bulk energy of node sets, and outward-optimisation
// checks against competitor sets.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nullflow/geometry.hpp"
#include "nullflow/solver.hpp"

namespace nullflow {

struct JumpRegion {
  double t0 = 0.0;
  std::vector<int> nodes;  // plateau node ids
  bool touches_inner = false;
  // filled by jump_graph:
  std::vector<std::uint8_t> cylindrical;  // per entry of `nodes`
  GraphFunction graph;                    // rescaled height w-hat, anchored at the
                                          // innermost plateau node
  double graph_fraction = 0.0;
  double cylinder_locus_radius = 0.0;     // |x| at the steepest w-hat node
  int steepest_node = -1;                 // node carrying the cylinder locus
  double mots_residual_sup = 0.0;         // sup |MOTS operator| over graphical part
  double mots_residual_mean = 0.0;
  bool graph_built = false;
};

struct WeakSolution {
  std::shared_ptr<const AnnularDomain> dom;
  std::vector<double> u;
  std::vector<DiscreteScalarField> eps_fields;  // retained eps sequence
  std::vector<double> cauchy_gaps;              // successive sup-norm gaps
  bool cauchy_warning = false;

  std::vector<JumpRegion> jumps;
  int truncation_plateau_nodes = 0;  // outer-boundary plateau from the domain
                                     // cutoff, excluded from `jumps`

  // unit normal field: grad u / |grad u| off plateaus, the extended normal on
  // them (built by compute_flow_normals)
  std::vector<Vec> normal;
  std::vector<std::uint8_t> normal_ok;

  double plateau_tol = 0.0, grad_tol = 0.0;  // thresholds used for detection

  double last_eps() const { return eps_fields.back().eps; }
};

// u := the smallest-eps field; Cauchy report of sup-norm gaps, warning when a
// gap fails to shrink by factor <= 0.9 (or with fewer than two fields).
WeakSolution extract_limit(std::vector<DiscreteScalarField> fields);

double default_plateau_tol(const WeakSolution& ws);
double default_grad_tol(const AnnularDomain& dom);

// Connected components of {|grad u| <= grad_tol} with extent >= 2h.
// Components attached to the outer boundary are the domain-truncation plateau
// and are tallied, not listed. Components touching the inner boundary get
// t0 = 0. Results are stored in ws.jumps and returned by reference.
std::vector<JumpRegion>& detect_plateaus(WeakSolution& ws, const InitialDataSet& data,
                                         double plateau_tol, double grad_tol);

// Rescaled jump-region height w-hat = u_eps / eps: classification into
// graphical / cylindrical nodes, the extended normal, and MOTS residual
// statistics over the graphical part.
void jump_graph(WeakSolution& ws, const InitialDataSet& data, JumpRegion& region,
                double cyl_threshold = 1e3);

// Unit normal field on the whole mask (flow normal off plateaus, extended
// normal on them, nearest-neighbour propagation where w-hat is flat).
void compute_flow_normals(WeakSolution& ws, const InitialDataSet& data);

// theta+ from the stored normal field (divergence of the normal plus the
// projected K trace); usable on plateaus where levelset_H_P is degenerate.
ThetaValues theta_from_normals(const WeakSolution& ws, const InitialDataSet& data, int node);

struct MotsCandidate {
  double t0 = 0.0;
  SurfaceSample surface;       // outer boundary of {u > t0}
  double sup_abs_theta = 0.0;  // over the sample, extended normal
  double radius_estimate = 0.0;
  double mots_residual_sup = 0.0;
  int plateau_nodes = 0;
  double graph_fraction = 0.0;
};

std::vector<MotsCandidate> mots_candidates(WeakSolution& ws, const InitialDataSet& data);

// ---------------------------------------------------------------------------
// Energy and outward optimisation.

// J^A(F) = |boundary F cap A| - sum_{F cap A} (|grad u| - P_nu) dV, with the
// normal from the weak solution (flow normal off plateaus, extended on them).
double energy_J(const InitialDataSet& data, const WeakSolution& ws,
                const std::vector<std::uint8_t>& F, const std::vector<std::uint8_t>& A);

struct CompetitorMargin {
  std::string label;
  double margin = 0.0;         // area-plus-bulk slack, >= 0 when E wins
  double lambda_margin = 0.0;  // lambda-almost-minimising slack
  int added_nodes = 0;
};

struct OutwardReport {
  bool optimizing = false;
  double worst_margin = 0.0;
  double worst_lambda_margin = 0.0;
  double slack = 0.0;    // O(h) tolerance used for the verdict
  double lambda = 0.0;   // n * largest K eigenvalue over the mask
  std::vector<CompetitorMargin> rows;
};

// Verifies |bd E| <= |bd F| + int_{F \ E} P + slack for each competitor
// F >= E (error otherwise), plus the lambda-almost-minimising inequality.
OutwardReport outward_check(const InitialDataSet& data, const WeakSolution& ws,
                            const std::vector<std::uint8_t>& E,
                            const std::vector<std::vector<std::uint8_t>>& competitors,
                            const std::vector<std::string>& labels);

// Deterministic competitor batteries.
std::vector<std::uint8_t> ball_indicator(const AnnularDomain& dom, double rho);
std::vector<std::uint8_t> sublevel_indicator(const WeakSolution& ws, double t);
std::vector<std::vector<std::uint8_t>> radial_competitors(const AnnularDomain& dom,
                                                          const std::vector<std::uint8_t>& E,
                                                          int count);
std::vector<std::uint8_t> dilate_indicator(const AnnularDomain& dom,
                                           const std::vector<std::uint8_t>& E, int cells);
std::vector<std::vector<std::uint8_t>> blob_competitors(const AnnularDomain& dom,
                                                        const std::vector<std::uint8_t>& E,
                                                        int count, std::uint64_t seed);

struct HullIdentityResult {
  bool applicable = false;
  double residual = 0.0;
  double area_inner = 0.0, area_outer = 0.0, bulk = 0.0;
  std::string note;
};

// |bd E_t| - |bd E_t^+| - int_{E_t^+ \ E_t} P at a jump time t > 0; skipped
// with a note at t = 0 (needs an outward-optimising initial region) and at
// non-jump times (the sets coincide).
HullIdentityResult hull_identity_check(const InitialDataSet& data, const WeakSolution& ws,
                                       double t);

struct ExtremumScan {
  bool pass = false;
  int witness = -1;  // strict interior extremum node when pass is false
};

// Strict interior local extrema scan against mask neighbours.
ExtremumScan scan_strict_extrema(const AnnularDomain& dom, const std::vector<double>& u);

// ---------------------------------------------------------------------------
// Per-time diagnostics.

struct FlowDiagnosticsRow {
  double t = 0, area = 0, bulk_P = 0, monotonicity_residual = 0, min_theta_plus = 0;
  int jump_flag = 0;
};

std::vector<FlowDiagnosticsRow> diagnostics_table(WeakSolution& ws,
                                                  const InitialDataSet& data,
                                                  const std::vector<double>& t_samples);

// Nodal theta table for surface sampling: levelset_H_P where the gradient is
// alive, the normal-field form on plateaus.
std::vector<ThetaValues> nodal_theta_table(WeakSolution& ws, const InitialDataSet& data);

}  // namespace nullflow
