#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "nullflow/runner.hpp"

using namespace nullflow;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json base_config(const std::string& outdir) {
  json j;
  j["data"] = {{"family", "euclidean"}};
  j["dimension"] = 3;
  j["e0"] = {{"type", "ball"}, {"radius", 1.0}};
  j["grid"] = {{"kind", "radial"}, {"h", 0.05}, {"L", 2.0 * std::log(6.0)},
               {"alpha_r_min", 4.0}};
  j["epsilon_schedule"] = {0.2, 0.1, 0.05, 0.025, 0.0125};
  j["s_steps"] = 1;
  j["newton"] = {{"tol", 1e-9}, {"max_iter", 60}};
  j["plateau"] = {{"grad_tol", 0.05}};
  j["seed"] = 7;
  j["output_dir"] = outdir;
  return j;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing rejects malformed documents") {
  CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1,2,3]"), ConfigError);

  json ok = base_config("/tmp/x");
  CHECK_NOTHROW(parse_config(ok.dump()));

  SUBCASE("unknown keys at any level") {
    json bad = ok;
    bad["frobnicate"] = 1;
    CHECK_THROWS_WITH_AS(parse_config(bad.dump()), doctest::Contains("frobnicate"),
                         ConfigError);
    json bad2 = ok;
    bad2["data"]["wat"] = 2;
    CHECK_THROWS_WITH_AS(parse_config(bad2.dump()), doctest::Contains("wat"), ConfigError);
    json bad3 = ok;
    bad3["newton"]["damping"] = {{"typo", 1}};
    CHECK_THROWS_AS(parse_config(bad3.dump()), ConfigError);
  }
  SUBCASE("unknown family") {
    json bad = ok;
    bad["data"]["family"] = "kerr";
    CHECK_THROWS_AS(parse_config(bad.dump()), ConfigError);
  }
  SUBCASE("missing required sections") {
    json bad = ok;
    bad.erase("e0");
    CHECK_THROWS_AS(parse_config(bad.dump()), ConfigError);
    json bad2 = ok;
    bad2.erase("epsilon_schedule");
    CHECK_THROWS_AS(parse_config(bad2.dump()), ConfigError);
  }
  SUBCASE("both or neither of L and r_out") {
    json bad = ok;
    bad["grid"]["r_out"] = 6.0;
    CHECK_THROWS_AS(parse_config(bad.dump()), ConfigError);
    json bad2 = ok;
    bad2["grid"].erase("L");
    CHECK_THROWS_AS(parse_config(bad2.dump()), ConfigError);
  }
  SUBCASE("non-finite or non-numeric parameters") {
    json bad = ok;
    bad["data"]["mass"] = "nan";
    CHECK_THROWS_AS(parse_config(bad.dump()), ConfigError);
    json bad2 = ok;
    bad2["grid"]["h"] = -0.1;
    CHECK_THROWS_AS(parse_config(bad2.dump()), ConfigError);
  }
  SUBCASE("unknown report names") {
    json bad = ok;
    bad["reports"] = {"decay", "horoscopes"};
    CHECK_THROWS_AS(parse_config(bad.dump()), ConfigError);
  }
}

TEST_CASE("quickstart run produces the artifact set and a near-exact field") {
  const fs::path dir = fresh_dir("nullflow_cli_quickstart");
  json j = base_config(dir.string());
  j["reports"] = {"decay", "apriori", "monotonicity", "energy", "mots", "oracle_compare"};
  const RunConfig cfg = parse_config(j.dump());
  const RunResult res = run(cfg);
  REQUIRE(res.exit_code == 0);

  CHECK(fs::exists(dir / "u_final.txt"));
  CHECK(fs::exists(dir / "diagnostics.csv"));
  CHECK(fs::exists(dir / "jumps.json"));
  CHECK(fs::exists(dir / "reports.json"));
  CHECK(fs::exists(dir / "oracle_compare.csv"));
  CHECK(fs::exists(dir / "checkpoints" / "stage_0.txt"));

  // the final field is 2 log r on the trusted region
  const InitialDataSet data = data_from_config(cfg);
  auto dom = std::make_shared<AnnularDomain>(
      build_domain(data, cfg.e0_radius, cfg.L, cfg.h, cfg.grid_kind, 2.0));
  const DiscreteScalarField f = read_checkpoint((dir / "u_final.txt").string(), dom);
  double sup = 0;
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    if (f.u[i] >= cfg.L - 2.0 - kTrustMargin) continue;
    sup = std::max(sup, std::abs(f.u[i] - 2.0 * std::log(dom->nodes[i].x[0])));
  }
  CHECK(sup <= 5e-2);

  // reports all pass and carry the stamp
  const json reports = json::parse(slurp(dir / "reports.json"));
  CHECK(reports.at("version").get<std::string>() == kVersion);
  CHECK(reports.contains("config_hash"));
  for (const auto& r : reports.at("reports")) {
    CAPTURE(r.at("name").get<std::string>());
    CHECK(r.at("pass").get<bool>());
  }

  // no jumps for flat data; the cutoff plateau is only tallied
  const json jumps = json::parse(slurp(dir / "jumps.json"));
  CHECK(jumps.at("jumps").empty());
  CHECK(jumps.at("truncation_plateau_nodes").get<int>() > 0);

  fs::remove_all(dir);
}

TEST_CASE("identical configs produce bit-identical artifacts") {
  const fs::path dir = fresh_dir("nullflow_cli_det");
  json j = base_config(dir.string());
  j["data"] = {{"family", "radial_traceless"}, {"mass", 0.0}, {"coefficient", 4.0}};
  j["grid"] = {{"kind", "radial"}, {"h", 0.1}, {"r_out", 9.0}, {"alpha_r_min", 10.0}};
  j["epsilon_schedule"] = {0.1, 0.05, 0.025};
  j["s_steps"] = 4;
  j["plateau"] = {{"grad_tol", 0.1}};
  j["reports"] = {"energy", "mots"};
  const std::string cfg_text = j.dump();

  REQUIRE(run(parse_config(cfg_text)).exit_code == 0);
  const char* names[] = {"u_final.txt", "diagnostics.csv", "jumps.json", "reports.json"};
  std::map<std::string, std::string> first;
  for (const char* name : names) first[name] = slurp(dir / name);
  REQUIRE(run(parse_config(cfg_text)).exit_code == 0);
  for (const char* name : names) {
    CAPTURE(name);
    CHECK(first[name] == slurp(dir / name));
  }
  fs::remove_all(dir);
}

TEST_CASE("negative ambient trace exits with the validation code") {
  const fs::path dir = fresh_dir("nullflow_cli_trk");
  InitialDataSet bad = make_euclidean(3);
  bad.extrinsic = [](const Vec& x) {
    const double r = norm(x, 3);
    Mat3 k;
    for (int i = 0; i < 3; ++i) k(i, i) = -1.0 / (r * r * r);
    return k;
  };
  const fs::path gridfile = dir / "bad_grid.txt";
  save_tabulated_grid(bad, gridfile.string(), 3, Vec{0.55, 0.55, 0.55}, {24, 24, 24}, 0.5);

  json j = base_config(dir.string());
  j["data"] = {{"family", "tabulated_grid"}, {"grid_file", gridfile.string()}};
  j["grid"] = {{"kind", "cartesian"}, {"h", 0.25}, {"L", 1.2}, {"alpha_r_min", 2.0}};
  j["epsilon_schedule"] = {0.2, 0.1};
  j.erase("plateau");
  const RunResult res = run(parse_config(j.dump()));
  CHECK(res.exit_code == 2);
  CHECK(res.message.find("tr K") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("forced nonconvergence exits with the solver code") {
  const fs::path dir = fresh_dir("nullflow_cli_nonconv");
  json j = base_config(dir.string());
  j["grid"]["L"] = 2.0 * std::log(4.0);
  j["epsilon_schedule"] = {0.2, 0.1};
  j["newton"] = {{"tol", 0.0}, {"max_iter", 1}};
  const RunResult res = run(parse_config(j.dump()));
  CHECK(res.exit_code == 3);
  fs::remove_all(dir);
}

TEST_CASE("validate subcommand reports decay and trace checks") {
  const fs::path dir = fresh_dir("nullflow_cli_validate");
  json j = base_config(dir.string());
  j["data"] = {{"family", "schwarzschild_isotropic"}, {"mass", 1.0},
               {"decay_constant", 3.0}};
  j["grid"] = {{"kind", "radial"}, {"h", 0.1}, {"L", 2.0}, {"alpha_r_min", 6.0}};
  j["epsilon_schedule"] = {0.1};
  const ValidateResult res = validate(parse_config(j.dump()));
  CHECK(res.exit_code == 0);
  CHECK(res.decay_pass);
  CHECK(res.trk_pass);
  CHECK(fs::exists(dir / "validation.json"));
  fs::remove_all(dir);
}

TEST_CASE("oracle comparison flags the jump and matches on the trusted region") {
  const fs::path dir = fresh_dir("nullflow_cli_oracle");
  json j = base_config(dir.string());
  j["data"] = {{"family", "radial_traceless"}, {"mass", 0.0}, {"coefficient", 4.0}};
  j["grid"] = {{"kind", "radial"}, {"h", 0.05}, {"r_out", 9.0},
               {"alpha_r_min", 10.0}};
  j["epsilon_schedule"] = {0.1, 0.05, 0.025, 0.0125};
  j["s_steps"] = 5;
  j["newton"] = {{"tol", 1e-9}, {"max_iter", 80}};
  const OracleCompareResult res = oracle_compare(parse_config(j.dump()));
  REQUIRE(res.exit_code == 0);
  CHECK(res.sup_diff <= 5e-2);
  const std::string csv = slurp(res.csv_path);
  CHECK(csv.find(",1,") != std::string::npos);  // some rows flagged in-jump
  fs::remove_all(dir);
}

TEST_CASE("oracle comparison requires a radial grid") {
  json j = base_config("/tmp/nullflow_cli_nonradial");
  j["dimension"] = 2;
  j["grid"] = {{"kind", "cartesian"}, {"h", 0.2}, {"L", 1.3}, {"alpha_r_min", 2.0}};
  j["epsilon_schedule"] = {0.2, 0.1};
  const OracleCompareResult res = oracle_compare(parse_config(j.dump()));
  CHECK(res.exit_code != 0);
}

}  // TEST_SUITE
