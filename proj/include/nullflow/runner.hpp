// Batch front end: JSON run configurations, the data -> domain -> solve ->
// weak-limit -> diagnostics pipeline, and machine-readable artifacts
// (checkpoints, CSV tables, JSON reports). Exit codes: 0 success, 2 invalid
// data, 3 solver nonconvergence, 4 configuration error.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nullflow/diagnostics.hpp"
#include "nullflow/oracle_radial.hpp"
#include "nullflow/solver.hpp"
#include "nullflow/weak_flow.hpp"

namespace nullflow {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& w) : std::runtime_error(w) {}
};

struct RunConfig {
  // data
  Family family = Family::euclidean;
  double mass = 0.0;
  double coefficient = 0.0;
  double decay_constant = 0.0;  // 0: family default
  std::string profile_file, grid_file;
  int dimension = 3;

  // E0
  bool e0_is_ball = true;
  double e0_radius = 1.0;
  std::string e0_levelset_file;

  // grid: exactly one of L (flow-time budget) or r_out (outer radius, from
  // which L = alpha log r_out once the subsolution coefficient is known)
  GridKind grid_kind = GridKind::radial;
  double h = 0.05;
  double L = 0.0;
  double r_out = 0.0;
  double alpha_r_min = 4.0;  // where the subsolution search starts
  bool octant = false;

  // solver
  std::vector<double> epsilon_schedule;
  int s_steps = 4;
  double newton_tol = 1e-9;
  int newton_max_iter = 50;
  int max_halvings = 10;
  int picard_after_stalls = 1;

  // weak flow
  double plateau_tol = 0.0;  // 0: tie to the measured Cauchy gap
  double grad_tol = 0.0;     // 0: 10 h
  double cyl_threshold = 1e3;

  // reports
  std::vector<std::string> reports;
  std::string output_dir = ".";
  std::uint64_t seed = 20240601;
  double interior_R = 1.0;
  int time_samples = 12;

  std::uint64_t config_hash = 0;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

InitialDataSet data_from_config(const RunConfig& cfg);

struct RunResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> artifacts;
};

// Full pipeline; artifacts land in cfg.output_dir.
RunResult run(const RunConfig& cfg);

struct OracleCompareResult {
  int exit_code = 0;
  std::string message;
  double sup_diff = 0.0;  // over trusted, non-jump rows
  double l2_diff = 0.0;
  std::string csv_path;
};

// Radial-family comparison of the grid arrival time against the exact radial
// weak solution; columns r, u_grid, u_oracle, |diff|, jump/trust flags.
OracleCompareResult oracle_compare(const RunConfig& cfg);

struct ValidateResult {
  int exit_code = 0;
  std::string message;
  bool decay_pass = false, trk_pass = false;
};

ValidateResult validate(const RunConfig& cfg);

// Region where the finite outer boundary does not pollute the solution:
// u < L - 2 - kTrustMargin.
inline constexpr double kTrustMargin = 0.5;

}  // namespace nullflow
