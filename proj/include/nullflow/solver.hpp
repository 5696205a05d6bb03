// Damped-Newton solver for the regularized Dirichlet problems on the annulus:
//   div(grad u / W) + s (g^{ij} - grad^i u grad^j u / W^2) K_ij = W,
//   W = sqrt(|grad u|^2 + eps^2),  u = 0 on the inner boundary,
//   u = s (L - 2) on the outer boundary,
// with a continuity march in s and warm-started continuation in eps.
// Jacobian rows come from dual-number evaluation of the residual kernel and
// are exact; a frozen-coefficient (Picard) direction backs up stalled steps.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nullflow/domain.hpp"
#include "nullflow/initial_data.hpp"

namespace nullflow {

struct SolveConfig {
  std::vector<double> eps_schedule;  // strictly decreasing, all > 0
  int s_steps = 4;
  double newton_tol = 1e-9;
  int max_iter = 50;
  int max_halvings = 10;
  int picard_after_stalls = 1;  // stalled line searches before trying Picard
  double grad_floor = 1e-10;
  double lin_tol = 1e-10;

  void validate() const;
};

struct DiscreteScalarField {
  std::shared_ptr<const AnnularDomain> dom;
  std::vector<double> u;
  double eps = 0.0;
  double s = 1.0;
  double final_residual = 0.0;
  int newton_iters = 0;
};

struct StageRecord {
  double eps = 0, s = 1, residual_norm = 0;
  int iterations = 0;
  std::vector<double> u;
};

struct NonconvergenceError : std::runtime_error {
  NonconvergenceError(const std::string& what, DiscreteScalarField best_iterate)
      : std::runtime_error(what), best(std::move(best_iterate)) {}
  DiscreteScalarField best;
};

class FlowSolver {
 public:
  FlowSolver(const InitialDataSet& data, std::shared_ptr<const AnnularDomain> dom,
             SolveConfig config);

  // PDE residual at interior nodes, Dirichlet extrapolation residual at
  // boundary nodes.
  std::vector<double> residual(const std::vector<double>& u, double eps, double s) const;

  // Directional derivative of the residual through the assembled Jacobian.
  std::vector<double> jacobian_times(const std::vector<double>& u, double eps, double s,
                                     const std::vector<double>& delta) const;

  DiscreteScalarField newton_solve(double eps, double s,
                                   const std::vector<double>* guess = nullptr) const;

  // s = 0 first, then uniform increments to s = 1 (warm starts, boundary data
  // rescaled); failed increments bisect up to 6 times before giving up.
  DiscreteScalarField homotopy_in_s(double eps, const std::vector<double>* guess = nullptr);

  // Full eps schedule; homotopy at the first solvable eps, then s = 1 warm
  // starts. Entries above the solvability threshold of the domain (no stage
  // converged yet) are skipped and recorded; later failures propagate.
  std::vector<DiscreteScalarField> continue_eps();
  const std::vector<double>& skipped_head_eps() const { return skipped_head_eps_; }

  const std::vector<StageRecord>& stages() const { return stages_; }
  const AnnularDomain& domain() const { return *dom_; }
  const SolveConfig& config() const { return config_; }
  double outer_bc(double s) const { return s * (dom_->L - 2.0); }

 private:
  struct Workspace;
  DiscreteScalarField solve_impl(double eps, double s, const std::vector<double>* guess,
                                 bool record) const;

  const InitialDataSet& data_;
  std::shared_ptr<const AnnularDomain> dom_;
  SolveConfig config_;
  GeometryCache cache_;
  mutable std::vector<StageRecord> stages_;
  std::vector<double> skipped_head_eps_;
};

// Spec-level free operation: residual field of the (eps, s) operator.
std::vector<double> residual_eps_s(const InitialDataSet& data, const AnnularDomain& dom,
                                   const std::vector<double>& u, double eps, double s);

void write_checkpoint(const std::string& path, const DiscreteScalarField& f);
DiscreteScalarField read_checkpoint(const std::string& path,
                                    std::shared_ptr<const AnnularDomain> dom);

}  // namespace nullflow
