// Command-line front end. Progress goes to stderr; data artifacts to files.
#include <CLI11.hpp>

#include <iostream>

#include "nullflow/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"nullflow: weak inverse null mean curvature flow solver suite"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = implementation choice)");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--output-dir", output_dir, "override the config output directory");
  };
  CLI::App* cmd_run = app.add_subcommand("run", "solve and emit artifacts");
  add_common(cmd_run);
  CLI::App* cmd_oracle =
      app.add_subcommand("oracle-compare", "grid vs exact radial solution");
  add_common(cmd_oracle);
  CLI::App* cmd_validate = app.add_subcommand("validate", "decay and tr K checks only");
  add_common(cmd_validate);

  CLI11_PARSE(app, argc, argv);
  nullflow::worker_threads() = threads;

  nullflow::RunConfig cfg;
  try {
    cfg = nullflow::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  }
  if (!output_dir.empty()) cfg.output_dir = output_dir;

  if (cmd_run->parsed()) {
    const auto res = nullflow::run(cfg);
    if (res.exit_code == 0)
      std::cerr << "run complete; " << res.artifacts.size() << " artifacts in "
                << cfg.output_dir << "\n";
    return res.exit_code;
  }
  if (cmd_oracle->parsed()) {
    const auto res = nullflow::oracle_compare(cfg);
    if (res.exit_code == 0)
      std::cerr << "oracle comparison: sup " << res.sup_diff << ", l2 " << res.l2_diff
                << " -> " << res.csv_path << "\n";
    return res.exit_code;
  }
  const auto res = nullflow::validate(cfg);
  return res.exit_code;
}
