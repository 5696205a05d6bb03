// Machine-checkable estimate reports for computed solutions: the interior
// null-expansion bound, the exponential area identity, the regularized-stage
// a priori estimates, and the strict-extrema scan.
#pragma once

#include <string>
#include <vector>

#include "nullflow/weak_flow.hpp"

namespace nullflow {

struct EstimateReport {
  std::string name;
  double lhs = 0;     // measured quantity
  double rhs = 0;     // bound it must respect
  double margin = 0;  // slack by which the inequality holds
  double slack = 0;   // tolerance used for the verdict
  bool pass = false;
  bool applicable = true;
  std::string location;
  std::string reference;  // which identity or estimate is being checked
};

struct InteriorBoundConstants {
  double lambda = 0, alpha = 0, bound = 0;
};

// lambda = 4 (3n + (12 + 3n) K0 R + n K1 R^2), alpha = 12 + 4 n K0 R,
// bound = lambda / (R (sqrt(alpha^2 + 2 n lambda) - alpha)).
InteriorBoundConstants interior_bound_constants(int n, double K0, double K1, double R);

// Measured theta+ at a node against max((H+P)_R, formula bound) on the ball
// B_R around it; inapplicable (not failed) when a plateau meets the ball.
EstimateReport interior_bound_check(const InitialDataSet& data, WeakSolution& ws, int node,
                                    double R);

struct MonotonicityReport {
  std::vector<FlowDiagnosticsRow> rows;
  double max_rel_residual = 0;             // pointwise derivative form
  double integrated_max_rel_residual = 0;  // A e^{-t} - A0 e^{-t0} + int e^{-s} dB
  bool empty = true;
};

// Central-difference d|Sigma_t|/dt + bulk - |Sigma_t| over a time grid;
// fewer than three samples produce an empty report.
MonotonicityReport monotonicity_check(WeakSolution& ws, const InitialDataSet& data,
                                      const std::vector<double>& t_samples);

// A priori estimates for every recorded (eps, s) stage: the eps lower bound,
// the log-barrier comparison from below, the boundary gradient bound, the
// sampled interior gradient bound, and the linear supersolution bound.
std::vector<EstimateReport> apriori_suite(const InitialDataSet& data,
                                          const AnnularDomain& dom,
                                          const std::vector<StageRecord>& stages,
                                          double newton_tol);

EstimateReport no_extrema_check(const WeakSolution& ws);

}  // namespace nullflow
