#include "nullflow/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace nullflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::vector<std::string>& keys,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

double finite_number(const json& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError(name + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(name + " must be finite");
  return x;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown(root,
                 {"data", "dimension", "e0", "grid", "epsilon_schedule", "s_steps",
                  "newton", "plateau", "reports", "output_dir", "seed", "interior_R",
                  "time_samples"},
                 "config root");
  RunConfig cfg;
  cfg.config_hash = fnv1a64(text);

  if (!root.contains("data")) throw ConfigError("config needs a 'data' object");
  const json& data = root.at("data");
  reject_unknown(data,
                 {"family", "mass", "coefficient", "decay_constant", "profile_file",
                  "grid_file"},
                 "data");
  const std::string fam = data.value("family", "");
  if (fam == "euclidean") cfg.family = Family::euclidean;
  else if (fam == "schwarzschild_isotropic") cfg.family = Family::schwarzschild_isotropic;
  else if (fam == "radial_traceless") cfg.family = Family::radial_traceless;
  else if (fam == "radial_profile") cfg.family = Family::radial_profile;
  else if (fam == "tabulated_grid") cfg.family = Family::tabulated_grid;
  else throw ConfigError("unknown data.family '" + fam + "'");
  if (data.contains("mass")) cfg.mass = finite_number(data["mass"], "data.mass");
  if (data.contains("coefficient"))
    cfg.coefficient = finite_number(data["coefficient"], "data.coefficient");
  if (data.contains("decay_constant"))
    cfg.decay_constant = finite_number(data["decay_constant"], "data.decay_constant");
  cfg.profile_file = data.value("profile_file", "");
  cfg.grid_file = data.value("grid_file", "");

  cfg.dimension = root.value("dimension", 3);
  if (cfg.dimension != 2 && cfg.dimension != 3)
    throw ConfigError("dimension must be 2 or 3");

  if (!root.contains("e0")) throw ConfigError("config needs an 'e0' object");
  const json& e0 = root.at("e0");
  reject_unknown(e0, {"type", "radius", "path"}, "e0");
  const std::string e0type = e0.value("type", "ball");
  if (e0type == "ball") {
    cfg.e0_is_ball = true;
    cfg.e0_radius = finite_number(e0.at("radius"), "e0.radius");
    if (!(cfg.e0_radius > 0)) throw ConfigError("e0.radius must be positive");
  } else if (e0type == "levelset_file") {
    cfg.e0_is_ball = false;
    cfg.e0_levelset_file = e0.value("path", "");
    if (cfg.e0_levelset_file.empty()) throw ConfigError("e0.path required");
    cfg.e0_radius = finite_number(e0.value("radius", 1.0), "e0.radius");
  } else {
    throw ConfigError("e0.type must be 'ball' or 'levelset_file'");
  }

  if (!root.contains("grid")) throw ConfigError("config needs a 'grid' object");
  const json& grid = root.at("grid");
  reject_unknown(grid, {"kind", "h", "L", "r_out", "alpha_r_min", "octant"}, "grid");
  const std::string kind = grid.value("kind", "radial");
  if (kind == "radial") cfg.grid_kind = GridKind::radial;
  else if (kind == "cartesian") cfg.grid_kind = GridKind::cartesian;
  else throw ConfigError("grid.kind must be 'radial' or 'cartesian'");
  cfg.h = finite_number(grid.at("h"), "grid.h");
  if (!(cfg.h > 0)) throw ConfigError("grid.h must be positive");
  if (grid.contains("L") == grid.contains("r_out"))
    throw ConfigError("grid needs exactly one of 'L' or 'r_out'");
  if (grid.contains("L")) {
    cfg.L = finite_number(grid["L"], "grid.L");
    if (!(cfg.L > 0)) throw ConfigError("grid.L must be positive");
  } else {
    cfg.r_out = finite_number(grid["r_out"], "grid.r_out");
    if (!(cfg.r_out > 0)) throw ConfigError("grid.r_out must be positive");
  }
  if (grid.contains("alpha_r_min"))
    cfg.alpha_r_min = finite_number(grid["alpha_r_min"], "grid.alpha_r_min");
  cfg.octant = grid.value("octant", false);

  if (!root.contains("epsilon_schedule"))
    throw ConfigError("config needs an 'epsilon_schedule' array");
  for (const auto& e : root.at("epsilon_schedule"))
    cfg.epsilon_schedule.push_back(finite_number(e, "epsilon_schedule entry"));
  if (cfg.epsilon_schedule.empty()) throw ConfigError("epsilon_schedule is empty");

  cfg.s_steps = root.value("s_steps", 4);
  if (cfg.s_steps < 1) throw ConfigError("s_steps must be >= 1");

  if (root.contains("newton")) {
    const json& nt = root.at("newton");
    reject_unknown(nt, {"tol", "max_iter", "damping"}, "newton");
    if (nt.contains("tol")) cfg.newton_tol = finite_number(nt["tol"], "newton.tol");
    cfg.newton_max_iter = nt.value("max_iter", cfg.newton_max_iter);
    if (nt.contains("damping")) {
      const json& dp = nt.at("damping");
      reject_unknown(dp, {"max_halvings", "picard_after_stalls"}, "newton.damping");
      cfg.max_halvings = dp.value("max_halvings", cfg.max_halvings);
      cfg.picard_after_stalls = dp.value("picard_after_stalls", cfg.picard_after_stalls);
    }
  }
  if (root.contains("plateau")) {
    const json& pl = root.at("plateau");
    reject_unknown(pl, {"plateau_tol", "grad_tol", "cyl_threshold"}, "plateau");
    if (pl.contains("plateau_tol"))
      cfg.plateau_tol = finite_number(pl["plateau_tol"], "plateau.plateau_tol");
    if (pl.contains("grad_tol"))
      cfg.grad_tol = finite_number(pl["grad_tol"], "plateau.grad_tol");
    if (pl.contains("cyl_threshold"))
      cfg.cyl_threshold = finite_number(pl["cyl_threshold"], "plateau.cyl_threshold");
  }
  if (root.contains("reports")) {
    for (const auto& r : root.at("reports")) {
      const std::string name = r.get<std::string>();
      const std::vector<std::string> known = {"decay",  "apriori",      "interior",
                                              "monotonicity", "energy", "mots",
                                              "oracle_compare"};
      if (std::find(known.begin(), known.end(), name) == known.end())
        throw ConfigError("unknown report '" + name + "'");
      cfg.reports.push_back(name);
    }
  }
  cfg.output_dir = root.value("output_dir", ".");
  cfg.seed = root.value("seed", std::uint64_t(20240601));
  if (root.contains("interior_R"))
    cfg.interior_R = finite_number(root["interior_R"], "interior_R");
  cfg.time_samples = root.value("time_samples", 12);
  if (cfg.time_samples < 3) throw ConfigError("time_samples must be >= 3");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

InitialDataSet data_from_config(const RunConfig& cfg) {
  InitialDataSet d;
  switch (cfg.family) {
    case Family::euclidean: d = make_euclidean(cfg.dimension); break;
    case Family::schwarzschild_isotropic:
      d = make_schwarzschild_isotropic(cfg.mass, cfg.dimension);
      break;
    case Family::radial_traceless:
      d = make_radial_traceless(cfg.mass, cfg.coefficient, cfg.dimension);
      break;
    case Family::radial_profile:
      d = make_radial_profile(load_radial_profile(cfg.profile_file), cfg.dimension);
      break;
    case Family::tabulated_grid: d = load_tabulated_grid(cfg.grid_file); break;
    default: throw ConfigError("unsupported data family");
  }
  if (cfg.decay_constant > 0) d.decay_constant = cfg.decay_constant;
  return d;
}

namespace {

bool wants(const RunConfig& cfg, const std::string& name) {
  return std::find(cfg.reports.begin(), cfg.reports.end(), name) != cfg.reports.end();
}

json report_json(const EstimateReport& r) {
  json j;
  j["name"] = r.name;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["margin"] = r.margin;
  j["pass"] = r.pass;
  j["applicable"] = r.applicable;
  j["location"] = r.location;
  j["reference"] = r.reference;
  return j;
}

void stamp(json* j, const RunConfig& cfg) {
  char hex[20];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(cfg.config_hash));
  (*j)["config_hash"] = std::string(hex);
  (*j)["version"] = kVersion;
}

std::string write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  return path.string();
}

struct DomainScales {
  double alpha = 0, L = 0, r_out = 0;
};

bool radial_family(Family f) {
  return f == Family::euclidean || f == Family::schwarzschild_isotropic ||
         f == Family::radial_traceless || f == Family::radial_profile;
}

DomainScales resolve_alpha(const InitialDataSet& data, const RunConfig& cfg) {
  DomainScales out;
  // alpha and the outer radius depend on each other; the binding constraint
  // sits at alpha_r_min, so two passes settle it
  const double r_guess =
      cfg.r_out > 0 ? cfg.r_out : std::exp(cfg.L / (0.6 * data.n()));
  double alpha = choose_alpha_subsolution(
      data, cfg.alpha_r_min, std::max(4.0 * cfg.alpha_r_min, 1.2 * r_guess));
  double r_out = cfg.r_out > 0 ? cfg.r_out : std::exp(cfg.L / alpha);
  alpha = choose_alpha_subsolution(data, cfg.alpha_r_min,
                                   std::max(r_out, cfg.alpha_r_min * 2));
  if (cfg.r_out > 0) {
    // the outer datum alpha log r_out - 2 must stay reachable: strong
    // curvature in the compact part delays the flow relative to the largest
    // subsolution exponent, so cap alpha with the oracle arrival time
    if (radial_family(data.family)) {
      try {
        const RadialData rd = radial_from_data(data);
        const RadialWeakSolution ows =
            radial_weak_solution(rd, cfg.e0_radius, 1.02 * cfg.r_out);
        const double u_out = ows.u(cfg.r_out);
        alpha = std::min(alpha, (u_out + 2.0 - 0.2) / std::log(cfg.r_out));
      } catch (const std::runtime_error& e) {
        throw ConfigError(std::string("grid.r_out does not contain the weak flow: ") +
                          e.what());
      }
    }
    out.r_out = cfg.r_out;
    out.L = alpha * std::log(cfg.r_out);
  } else {
    out.L = cfg.L;
    out.r_out = std::exp(cfg.L / alpha);
  }
  out.alpha = alpha;
  return out;
}

std::function<double(const Vec&)> levelset_from_file(const std::string& path, int dim) {
  // reuse the tabulated-grid reader with a single component: here we accept a
  // plain grid of signed values in the tabulated text layout
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open levelset file: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  int version = 0, d = 0;
  hs >> magic >> version >> d;
  if (magic != "nullflow-levelset" || version != 1 || d != dim)
    throw ConfigError("bad levelset header: " + path);
  std::array<int, 3> shape{1, 1, 1};
  double h = 0;
  Vec origin{};
  for (int a = 0; a < dim; ++a) hs >> shape[a];
  hs >> h;
  for (int a = 0; a < dim; ++a) hs >> origin[a];
  std::size_t total = 1;
  for (int a = 0; a < dim; ++a) total *= shape[a];
  auto values = std::make_shared<std::vector<double>>(total);
  for (auto& v : *values)
    if (!(in >> v)) throw ConfigError("truncated levelset file: " + path);
  return [values, shape, h, origin, dim](const Vec& x) {
    std::array<int, 3> c{0, 0, 0};
    std::array<double, 3> t{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
      double s = (x[a] - origin[a]) / h;
      int cc = int(std::floor(s));
      cc = std::clamp(cc, 0, shape[a] - 2);
      c[a] = cc;
      t[a] = std::clamp(s - cc, 0.0, 1.0);
    }
    double v = 0;
    for (int corner = 0; corner < (1 << dim); ++corner) {
      double w = 1;
      std::array<int, 3> idx = c;
      for (int a = 0; a < dim; ++a) {
        const bool hi = corner & (1 << a);
        w *= hi ? t[a] : 1 - t[a];
        if (hi) idx[a] += 1;
      }
      v += w * (*values)[(std::size_t(idx[2]) * shape[1] + idx[1]) * shape[0] + idx[0]];
    }
    return v;
  };
}

struct Pipeline {
  InitialDataSet data;
  std::shared_ptr<AnnularDomain> dom;
  std::unique_ptr<FlowSolver> solver;
  std::vector<DiscreteScalarField> fields;
  WeakSolution ws;
  DomainScales scales;
};

Pipeline run_pipeline(const RunConfig& cfg) {
  Pipeline p;
  p.data = data_from_config(cfg);
  p.scales = resolve_alpha(p.data, cfg);
  std::function<double(const Vec&)> e0ls;
  if (!cfg.e0_is_ball) e0ls = levelset_from_file(cfg.e0_levelset_file, cfg.dimension);
  p.dom = std::make_shared<AnnularDomain>(
      build_domain(p.data, cfg.e0_radius, p.scales.L, cfg.h, cfg.grid_kind,
                   p.scales.alpha, cfg.octant, e0ls));

  SolveConfig sc;
  sc.eps_schedule = cfg.epsilon_schedule;
  sc.s_steps = cfg.s_steps;
  sc.newton_tol = cfg.newton_tol;
  sc.max_iter = cfg.newton_max_iter;
  sc.max_halvings = cfg.max_halvings;
  sc.picard_after_stalls = cfg.picard_after_stalls;
  p.solver = std::make_unique<FlowSolver>(p.data, p.dom, sc);
  p.fields = p.solver->continue_eps();
  p.ws = extract_limit(p.fields);
  const double ptol = cfg.plateau_tol > 0 ? cfg.plateau_tol : default_plateau_tol(p.ws);
  const double gtol = cfg.grad_tol > 0 ? cfg.grad_tol : default_grad_tol(*p.dom);
  detect_plateaus(p.ws, p.data, ptol, gtol);
  for (auto& region : p.ws.jumps) jump_graph(p.ws, p.data, region, cfg.cyl_threshold);
  compute_flow_normals(p.ws, p.data);
  return p;
}

std::vector<Vec> trk_sample_points(const RunConfig& cfg, double r_out) {
  std::vector<Vec> pts;
  for (int i = 0; i < 16; ++i) {
    const double r = cfg.e0_radius + (r_out - cfg.e0_radius) * (i + 0.5) / 16.0;
    for (const Vec& x : sphere_points(cfg.dimension, r, 16)) pts.push_back(x);
  }
  return pts;
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  RunResult res;
  try {
    fs::create_directories(cfg.output_dir);
    const InitialDataSet data = data_from_config(cfg);

    // standing hypothesis: tr K >= 0 outside E0
    const double r_out_guess =
        cfg.r_out > 0 ? cfg.r_out : std::exp(cfg.L / (0.5 * data.n()));
    const TrKReport trk =
        validate_trK_sign(data, trk_sample_points(cfg, std::min(r_out_guess, 1e3)));
    if (!trk.pass) {
      std::ostringstream os;
      os << "invalid data: tr K = " << trk.worst_value << " < 0 at ("
         << trk.worst_point[0] << ", " << trk.worst_point[1] << ", " << trk.worst_point[2]
         << ")";
      res.exit_code = 2;
      res.message = os.str();
      std::cerr << res.message << "\n";
      return res;
    }
    if (wants(cfg, "decay")) {
      const double r0 = std::max(cfg.alpha_r_min, 2.0 * cfg.e0_radius);
      const DecayReport dr = validate_asymptotic_flatness(data, {r0, 2 * r0, 4 * r0});
      if (!dr.all_pass) {
        res.exit_code = 2;
        res.message = "invalid data: asymptotic decay check failed";
        std::cerr << res.message << "\n";
        return res;
      }
    }

    Pipeline p = run_pipeline(cfg);
    const fs::path outdir(cfg.output_dir);

    // checkpoints
    fs::create_directories(outdir / "checkpoints");
    int stage_no = 0;
    for (const auto& st : p.solver->stages()) {
      DiscreteScalarField f;
      f.dom = p.dom;
      f.u = st.u;
      f.eps = st.eps;
      f.s = st.s;
      f.final_residual = st.residual_norm;
      f.newton_iters = st.iterations;
      std::ostringstream name;
      name << "stage_" << stage_no++ << ".txt";
      const fs::path cp = outdir / "checkpoints" / name.str();
      write_checkpoint(cp.string(), f);
      res.artifacts.push_back(cp.string());
    }
    {
      const fs::path cp = outdir / "u_final.txt";
      DiscreteScalarField f;
      f.dom = p.dom;
      f.u = p.ws.u;
      f.eps = p.ws.eps_fields.back().eps;
      f.s = 1.0;
      f.final_residual = p.ws.eps_fields.back().final_residual;
      f.newton_iters = p.ws.eps_fields.back().newton_iters;
      write_checkpoint(cp.string(), f);
      res.artifacts.push_back(cp.string());
    }

    // diagnostics table
    {
      const double t_hi = std::max(0.2, p.dom->L - 2.0 - kTrustMargin);
      const double t_lo = std::min(0.25 * t_hi, 4.0 * p.ws.plateau_tol + 1e-3);
      std::vector<double> ts;
      for (int k = 0; k < cfg.time_samples; ++k)
        ts.push_back(t_lo + (t_hi - t_lo) * double(k) / (cfg.time_samples - 1));
      const auto rows = diagnostics_table(p.ws, p.data, ts);
      const fs::path csv = outdir / "diagnostics.csv";
      std::ofstream out(csv);
      char hex[20];
      std::snprintf(hex, sizeof(hex), "%016llx",
                    static_cast<unsigned long long>(cfg.config_hash));
      out << "# " << kVersion << " config " << hex << "\n";
      out << "t,area,bulk_P,monotonicity_residual,min_theta_plus,jump_flag\n";
      for (const auto& r : rows)
        out << format_double17(r.t) << "," << format_double17(r.area) << ","
            << format_double17(r.bulk_P) << "," << format_double17(r.monotonicity_residual)
            << "," << format_double17(r.min_theta_plus) << "," << r.jump_flag << "\n";
      res.artifacts.push_back(csv.string());
    }

    // jump regions
    {
      json j;
      stamp(&j, cfg);
      j["truncation_plateau_nodes"] = p.ws.truncation_plateau_nodes;
      json arr = json::array();
      auto cands = mots_candidates(p.ws, p.data);
      for (const auto& c : cands) {
        json e;
        e["t0"] = c.t0;
        e["node_count"] = c.plateau_nodes;
        e["graph_fraction"] = c.graph_fraction;
        e["mots_sup_theta"] = c.sup_abs_theta;
        e["mots_radius_estimate"] = c.radius_estimate;
        arr.push_back(e);
      }
      j["jumps"] = arr;
      res.artifacts.push_back(write_json(j, outdir / "jumps.json"));
    }

    // requested reports
    {
      json reports = json::array();
      if (wants(cfg, "decay")) {
        const double r0 = std::max(cfg.alpha_r_min, 2.0 * cfg.e0_radius);
        const DecayReport dr = validate_asymptotic_flatness(p.data, {r0, 2 * r0, 4 * r0});
        for (int row = 0; row < 5; ++row) {
          EstimateReport er;
          er.name = "decay_" + std::string(dr.names[row]);
          er.reference = "asymptotic decay inequality";
          er.lhs = dr.measured[row];
          er.rhs = dr.decay_constant;
          er.margin = er.rhs - er.lhs;
          er.pass = dr.pass[row];
          reports.push_back(report_json(er));
        }
      }
      if (wants(cfg, "apriori"))
        for (const auto& er :
             apriori_suite(p.data, *p.dom, p.solver->stages(), cfg.newton_tol))
          reports.push_back(report_json(er));
      if (wants(cfg, "interior")) {
        const int stride = std::max<std::size_t>(1, p.dom->interior_ids.size() / 6);
        for (std::size_t k = 0; k < p.dom->interior_ids.size(); k += stride) {
          const int node = p.dom->interior_ids[k];
          const double rad = norm(p.dom->nodes[node].x, p.dom->dim);
          if (rad - p.dom->inner_radius < cfg.interior_R + 2 * p.dom->h ||
              p.dom->outer_radius - rad < cfg.interior_R + 2 * p.dom->h)
            continue;
          reports.push_back(
              report_json(interior_bound_check(p.data, p.ws, node, cfg.interior_R)));
        }
      }
      if (wants(cfg, "monotonicity")) {
        const double t_hi = std::max(0.2, p.dom->L - 2.0 - kTrustMargin);
        // start clear of the excision boundary: level sets within a few
        // cells of it lose marching cells and bias the area derivative
        const auto gn = grid_gradient_norm(*p.dom, p.data, p.ws.u);
        double slope_inner = 0.0;
        for (int id : p.dom->inner_ids)
          for (int a = 0; a < p.dom->dim; ++a)
            for (int sg : {-1, 1}) {
              const int nb = p.dom->neighbor(id, a, sg);
              if (nb >= 0) slope_inner = std::max(slope_inner, gn[nb]);
            }
        const double t_lo = std::min(0.5 * t_hi, std::max(0.05, 4.0 * p.dom->h * slope_inner));
        // the area derivative needs spacing that clears the extraction
        // quantization scale
        const int nt = std::max(
            3, std::min(cfg.time_samples, int((t_hi - t_lo) / 0.1) + 1));
        std::vector<double> ts;
        for (int k = 0; k < nt; ++k)
          ts.push_back(t_lo + (t_hi - t_lo) * double(k) / (nt - 1));
        const MonotonicityReport mr = monotonicity_check(p.ws, p.data, ts);
        EstimateReport er;
        er.name = "area_growth_identity";
        er.reference = "integrated form of d|Sigma_t|/dt + bulk P = |Sigma_t|";
        er.lhs = mr.integrated_max_rel_residual;
        er.rhs = 0.05;
        er.margin = er.rhs - er.lhs;
        er.pass = !mr.empty && er.margin >= 0;
        er.applicable = !mr.empty;
        reports.push_back(report_json(er));
        EstimateReport er2;
        er2.name = "area_growth_identity_pointwise";
        er2.reference = "central-difference form (noisier by one derivative)";
        er2.lhs = mr.max_rel_residual;
        er2.rhs = 0.15;
        er2.margin = er2.rhs - er2.lhs;
        er2.pass = !mr.empty && er2.margin >= 0;
        er2.applicable = !mr.empty;
        reports.push_back(report_json(er2));
      }
      if (wants(cfg, "energy")) {
        const double t_hi = std::max(0.2, p.dom->L - 2.0 - kTrustMargin);
        for (double frac : {0.35, 0.6, 0.85}) {
          const double t = frac * t_hi;
          const auto E = sublevel_indicator(p.ws, t);
          auto comps = radial_competitors(*p.dom, E, 6);
          comps.push_back(dilate_indicator(*p.dom, E, 1));
          comps.push_back(dilate_indicator(*p.dom, E, 3));
          for (auto& b : blob_competitors(*p.dom, E, 5, cfg.seed)) comps.push_back(b);
          std::vector<std::string> labels(comps.size(), "competitor");
          const OutwardReport rep = outward_check(p.data, p.ws, E, comps, labels);
          EstimateReport er;
          er.name = "outward_optimisation_t_" + format_double17(t);
          er.reference = "area plus bulk energy minimal on the outside";
          er.lhs = -rep.worst_margin;
          er.rhs = rep.slack;
          er.margin = rep.worst_margin + rep.slack;
          er.pass = rep.optimizing;
          reports.push_back(report_json(er));
        }
      }
      if (wants(cfg, "mots")) {
        for (const auto& c : mots_candidates(p.ws, p.data)) {
          EstimateReport er;
          er.name = "mots_candidate_t0_" + format_double17(c.t0);
          er.reference = "null expansion of the jump-region boundary";
          er.lhs = c.sup_abs_theta;
          er.rhs = 10.0 * p.dom->h;
          er.margin = er.rhs - er.lhs;
          er.pass = er.margin >= 0;
          reports.push_back(report_json(er));
        }
      }
      if (wants(cfg, "oracle_compare") && p.dom->kind == GridKind::radial) {
        OracleCompareResult oc = oracle_compare(cfg);
        EstimateReport er;
        er.name = "oracle_comparison";
        er.reference = "grid arrival time vs exact radial solution";
        er.lhs = oc.sup_diff;
        er.rhs = std::max(cfg.h, 5e-2);
        er.margin = er.rhs - er.lhs;
        er.pass = oc.exit_code == 0 && er.margin >= 0;
        reports.push_back(report_json(er));
      }
      json j;
      stamp(&j, cfg);
      j["reports"] = reports;
      res.artifacts.push_back(write_json(j, outdir / "reports.json"));
    }
    res.exit_code = 0;
    res.message = "ok";
    return res;
  } catch (const ConfigError& e) {
    res.exit_code = 4;
    res.message = std::string("config error: ") + e.what();
  } catch (const InvalidDataError& e) {
    res.exit_code = 2;
    res.message = std::string("invalid data: ") + e.what();
  } catch (const NonconvergenceError& e) {
    res.exit_code = 3;
    res.message = std::string("solver did not converge: ") + e.what();
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.message = std::string("error: ") + e.what();
  }
  std::cerr << res.message << "\n";
  return res;
}

OracleCompareResult oracle_compare(const RunConfig& cfg) {
  OracleCompareResult res;
  try {
    if (cfg.family == Family::tabulated_grid)
      throw std::runtime_error("oracle_compare: data family is not radial");
    if (cfg.grid_kind != GridKind::radial)
      throw std::runtime_error("oracle_compare: needs grid.kind = radial");
    Pipeline p = run_pipeline(cfg);
    const RadialData rd = radial_from_data(p.data);
    const RadialWeakSolution ows =
        radial_weak_solution(rd, cfg.e0_radius, p.dom->outer_radius);

    fs::create_directories(cfg.output_dir);
    const fs::path csv = fs::path(cfg.output_dir) / "oracle_compare.csv";
    std::ofstream out(csv);
    char hex[20];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(cfg.config_hash));
    out << "# " << kVersion << " config " << hex << "\n";
    out << "r,u_grid,u_oracle,abs_diff,jump_flag,trusted\n";
    double sup = 0, l2 = 0;
    std::size_t trusted_count = 0;
    for (std::size_t i = 0; i < p.dom->nodes.size(); ++i) {
      const double r = p.dom->nodes[i].x[0];
      const double ug = p.ws.u[i];
      const double uo = ows.u(r);
      const bool jump = ows.in_jump(r);
      const bool trusted = ug < p.dom->L - 2.0 - kTrustMargin && !jump;
      const double d = std::abs(ug - uo);
      if (trusted) {
        sup = std::max(sup, d);
        l2 += d * d;
        ++trusted_count;
      }
      out << format_double17(r) << "," << format_double17(ug) << "," << format_double17(uo)
          << "," << format_double17(d) << "," << (jump ? 1 : 0) << "," << (trusted ? 1 : 0)
          << "\n";
    }
    res.sup_diff = sup;
    res.l2_diff = trusted_count ? std::sqrt(l2 / trusted_count) : 0.0;
    out << "# sup " << format_double17(res.sup_diff) << " l2 " << format_double17(res.l2_diff)
        << "\n";
    res.csv_path = csv.string();
    res.message = "ok";
    return res;
  } catch (const ConfigError& e) {
    res.exit_code = 4;
    res.message = e.what();
  } catch (const NonconvergenceError& e) {
    res.exit_code = 3;
    res.message = e.what();
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.message = e.what();
  }
  std::cerr << res.message << "\n";
  return res;
}

ValidateResult validate(const RunConfig& cfg) {
  ValidateResult res;
  try {
    const InitialDataSet data = data_from_config(cfg);
    const double r0 = std::max(cfg.alpha_r_min, 2.0 * cfg.e0_radius);
    const DecayReport dr = validate_asymptotic_flatness(data, {r0, 2 * r0, 4 * r0});
    const double r_out =
        cfg.r_out > 0 ? cfg.r_out : std::exp(cfg.L / (0.5 * data.n()));
    const TrKReport trk =
        validate_trK_sign(data, trk_sample_points(cfg, std::min(r_out, 1e3)));
    res.decay_pass = dr.all_pass;
    res.trk_pass = trk.pass;

    fs::create_directories(cfg.output_dir);
    json j;
    stamp(&j, cfg);
    j["trK_nonnegative"] = trk.pass;
    j["trK_worst_value"] = trk.worst_value;
    json decay = json::array();
    for (int row = 0; row < 5; ++row) {
      json e;
      e["name"] = dr.names[row];
      e["exponent"] = dr.exponents[row];
      e["measured"] = dr.measured[row];
      e["pass"] = dr.pass[row];
      decay.push_back(e);
    }
    j["decay"] = decay;
    j["decay_constant"] = dr.decay_constant;
    write_json(j, fs::path(cfg.output_dir) / "validation.json");

    if (!res.decay_pass || !res.trk_pass) {
      res.exit_code = 2;
      res.message = "invalid data: validation failed";
      std::cerr << res.message << "\n";
    } else {
      res.message = "ok";
    }
    return res;
  } catch (const ConfigError& e) {
    res.exit_code = 4;
    res.message = e.what();
  } catch (const InvalidDataError& e) {
    res.exit_code = 2;
    res.message = e.what();
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.message = e.what();
  }
  std::cerr << res.message << "\n";
  return res;
}

}  // namespace nullflow
