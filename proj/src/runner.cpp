#include "cmhd/runner.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "cmhd/carleman.hpp"
#include "cmhd/fields_io.hpp"
#include "cmhd/inverse.hpp"
#include "cmhd/selftest.hpp"
#include "cmhd/stability.hpp"

namespace cmhd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Comment lines for CSV headers: timestamp first, then the canonical config.
std::vector<std::string> csv_header(const ExperimentConfig& cfg, const std::string& kind) {
  std::vector<std::string> h{"generated " + timestamp(),
                             "report " + kind + " version " + std::to_string(kReportVersion)};
  std::istringstream in(canonical_dump(cfg));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) h.push_back("config " + line);
  return h;
}

json json_header(const ExperimentConfig& cfg, const std::string& kind) {
  json j;
  j["generated"] = timestamp();
  j["report"] = kind;
  j["version"] = kReportVersion;
  j["config"] = canonical_dump(cfg);
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw PreconditionError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

/// Non-finite values become null so the files stay valid JSON.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_error(const fs::path& dir, const std::string& command, int code,
                 const std::string& kind, const std::string& message) {
  json j;
  j["generated"] = timestamp();
  j["report"] = "error";
  j["version"] = kReportVersion;
  j["command"] = command;
  j["exit_code"] = code;
  j["kind"] = kind;
  j["message"] = message;
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream os(dir / "error.json");
  if (os) os << j.dump(2) << "\n";
}

/// Failure raised after the reports are written (non-convergence, failed rows).
struct SoftFailure {
  int code = kExitOk;
  std::string kind, message;
};

struct Setup {
  GridPtr g;
  BoundaryPartition bp;
  DistanceFunction d;
};

Setup make_setup(const ExperimentConfig& cfg) {
  const GridSpec spec{cfg.grid.n, cfg.grid.n, cfg.grid.n, cfg.grid.nt, cfg.grid.T};
  auto [g, bp] = build_grid(spec, default_gamma());
  Setup s{g, bp, build_distance_d(g, bp)};
  return s;
}

ScenarioRecipe recipe_of(const ExperimentConfig& cfg) {
  ScenarioRecipe r;
  r.name = cfg.scenario.recipe;
  r.t0 = cfg.grid.t0;
  r.diff_scale = cfg.scenario.diff_scale;
  r.envelope = cfg.scenario.envelope;
  return r;
}

json solve_json(const SolveStats& s) {
  json j;
  j["iterations"] = s.iterations;
  j["converged"] = s.converged;
  j["normal_residual"] = num(s.normal_residual);
  j["rel_normal_residual"] = num(s.rel_normal_residual);
  j["objective"] = num(s.objective);
  return j;
}

json field_json(const FieldReconstruction& f) {
  json j;
  j["err_H1"] = num(f.err_H1);
  j["rel_err_H1"] = num(f.rel_err_H1);
  j["residual_norm"] = num(f.residual_norm);
  j["rho_gamma"] = num(f.rho_gamma);
  j["rho_reg"] = num(f.rho_reg);
  j["data_rows"] = f.data_rows;
  j["solver"] = solve_json(f.stats);
  return j;
}

json line_json(const LineFit& f) {
  json j;
  j["slope"] = num(f.slope);
  j["slope_stderr"] = num(f.se_slope);
  j["slope_ci95"] = {num(f.ci_low), num(f.ci_high)};
  j["intercept"] = num(f.intercept);
  j["intercept_stderr"] = num(f.se_intercept);
  j["points"] = f.points;
  return j;
}

// ---------------------------------------------------------------- commands

SoftFailure cmd_verify(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const GridSpec spec{cfg.grid.n, cfg.grid.n, cfg.grid.n, cfg.grid.nt, cfg.grid.T};
  const WeightSetup ws =
      default_weight_setup(spec, cfg.grid.t0, cfg.weights.beta_margin, cfg.weights.eps);
  SweepParams sp;
  sp.s_list = cfg.weights.s_list;
  sp.lambda_list = cfg.weights.lambda_list;
  sp.spread_threshold = cfg.weights.spread_threshold;
  sp.endpoint_s = cfg.weights.endpoint_s;
  sp.threads = cfg.threads;
  const std::vector<std::string> ids = cfg.estimates.empty() ? known_estimates() : cfg.estimates;

  json summary = json_header(cfg, "verify");
  json per = json::array();
  std::vector<std::string> failed;
  for (const auto& id : ids) {
    const auto est = default_estimate(id, ws);
    const CarlemanReport rep = sweep(*est, ws, sp);
    const std::string file = "verify_" + id + ".csv";
    write_report_csv((out / file).string(), rep, csv_header(cfg, "verify"));
    json e;
    e["estimate_id"] = id;
    e["file"] = file;
    e["rows"] = rep.rows.size();
    e["all_finite"] = rep.summary.all_finite;
    e["max_ratio"] = num(rep.summary.max_ratio);
    e["max_spread"] = num(rep.summary.max_spread);
    e["spread_threshold"] = rep.summary.spread_threshold;
    e["spread_ok"] = rep.summary.spread_ok();
    e["endpoint_s"] = rep.summary.endpoint_s;
    e["max_endpoint_fraction"] = num(rep.summary.max_endpoint_fraction);
    e["max_endpoint_weight_fraction"] = num(rep.summary.max_endpoint_weight_fraction);
    json lam = json::array();
    for (const auto& pl : rep.summary.per_lambda)
      lam.push_back({{"lambda", pl.lambda},
                     {"min_ratio", num(pl.min_ratio)},
                     {"max_ratio", num(pl.max_ratio)},
                     {"spread", num(pl.spread)},
                     {"all_finite", pl.all_finite}});
    e["per_lambda"] = lam;
    per.push_back(e);
    for (const auto& r : rep.rows)
      if (r.status.rfind("failed", 0) == 0) failed.push_back(id + " s=" + csv_number(r.s) + ": " + r.status);
    log << "verify " << id << ": " << rep.rows.size() << " rows, max spread "
        << rep.summary.max_spread << (rep.summary.spread_ok() ? "" : " (above threshold)") << "\n";
  }
  summary["estimates"] = per;
  write_json(out / "verify_summary.json", summary);
  if (!failed.empty()) {
    std::string msg = "estimate rows failed:";
    for (const auto& f : failed) msg += " [" + f + "]";
    return {kExitNumerical, "numerical", msg};
  }
  return {};
}

SoftFailure cmd_reconstruct(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const Setup st = make_setup(cfg);
  const Scenario sc = manufacture_scenario(st.g, st.d, recipe_of(cfg));
  const ReconContext ctx = make_context(st.g, st.bp, st.d, cfg.grid.t0);
  const std::uint64_t seed = cfg.scenario.seeds.front();
  const ObservationData obs = observe(sc, cfg.recon_sigma, seed);
  const ReconstructionResult res = reconstruct(ctx, sc, obs, cfg.recon);

  write_field_csv((out / "nu_estimate.csv").string(), res.nu.estimate, &res.nu.report_mask);
  write_field_csv((out / "kappa_estimate.csv").string(), res.kappa.estimate, &res.kappa.report_mask);
  // the report mask lies where the local cutoff equals one
  write_field_csv((out / "nu_error.csv").string(), res.nu.estimate - sc.nu_true, &res.nu.report_mask);
  write_field_csv((out / "kappa_error.csv").string(), res.kappa.estimate - sc.kappa_true,
                  &res.kappa.report_mask);

  json j = json_header(cfg, "reconstruct");
  j["mode"] = to_string(cfg.recon.mode);
  j["weighting"] = to_string(cfg.recon.weighting);
  j["derivatives"] = to_string(cfg.recon.deriv);
  j["diffusion"] = to_string(cfg.recon.diffusion);
  j["sigma"] = cfg.recon_sigma;
  j["seed"] = seed;
  const MeasurementNorm D = measurement_norm_D(obs, cfg.recon.mode, st.d, st.bp, cfg.recon.eps);
  j["D"] = num(D.value);
  json terms;
  for (const auto& t : D.terms) terms[t.name] = num(t.value);
  j["D_terms"] = terms;
  j["nu"] = field_json(res.nu);
  j["kappa"] = field_json(res.kappa);
  j["fields"] = {"nu_estimate.csv", "kappa_estimate.csv", "nu_error.csv", "kappa_error.csv"};
  write_json(out / "reconstruct.json", j);
  log << "reconstruct " << to_string(cfg.recon.mode) << ": nu rel H1 " << res.nu.rel_err_H1
      << ", kappa rel H1 " << res.kappa.rel_err_H1 << "\n";
  if (!res.nu.stats.converged || !res.kappa.stats.converged)
    return {kExitNumerical, "non_convergence",
            "least-squares solve did not converge (nu " +
                std::to_string(res.nu.stats.iterations) + " iterations, rel residual " +
                csv_number(res.nu.stats.rel_normal_residual) + "; kappa " +
                std::to_string(res.kappa.stats.iterations) + " iterations, rel residual " +
                csv_number(res.kappa.stats.rel_normal_residual) + ")"};
  return {};
}

SoftFailure cmd_stability(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const Setup st = make_setup(cfg);
  const Scenario sc = manufacture_scenario(st.g, st.d, recipe_of(cfg));
  const ReconContext ctx = make_context(st.g, st.bp, st.d, cfg.grid.t0);
  StabilityParams p;
  p.sigmas = cfg.stability.sigmas;
  p.seeds = cfg.scenario.seeds;
  p.recon = cfg.recon;
  p.recon.tol = cfg.stability.tol;
  p.noisy_rho_reg_factor = cfg.stability.noisy_rho_reg_factor;
  p.threads = cfg.threads;
  const StabilityTable t = stability_experiment(ctx, sc, p);
  const std::string mode = to_string(t.mode);
  write_stability_csv((out / ("stability_" + mode + ".csv")).string(), t,
                      csv_header(cfg, "stability"));

  json j = json_header(cfg, "stability");
  j["mode"] = mode;
  j["derivatives"] = to_string(t.deriv);
  j["error_reference"] = t.error_reference;
  j["data_rows"] = t.rows.size();
  std::size_t unconverged = 0;
  for (const auto& r : t.rows) unconverged += r.converged ? 0 : 1;
  j["unconverged_rows"] = unconverged;
  if (t.mode == ReconMode::Global) {
    j["fit"] = {{"total", line_json(t.slope_total)},
                {"nu", line_json(t.slope_nu)},
                {"kappa", line_json(t.slope_kappa)}};
    log << "stability global: slope " << t.slope_total.slope << " +- " << t.slope_total.se_slope
        << "\n";
  } else {
    const EnvelopeFit& e = t.envelope;
    j["fit"] = {{"theta", num(e.theta)},
                {"theta_stderr", num(e.se_theta)},
                {"theta_at_bound", e.theta_at_bound},
                {"C", num(e.C)},
                {"log_C_fit", num(e.log_c_fit)},
                {"M", num(e.M)},
                {"misfit", num(e.misfit)},
                {"points", e.points}};
    log << "stability local: theta " << e.theta << (e.theta_at_bound ? " (at search bound)" : "")
        << ", C " << e.C << ", M " << e.M << "\n";
  }
  j["file"] = "stability_" + mode + ".csv";
  write_json(out / ("stability_" + mode + ".json"), j);
  if (unconverged > 0)
    return {kExitNumerical, "non_convergence",
            std::to_string(unconverged) + " stability cells did not converge"};
  return {};
}

SoftFailure cmd_manufacture(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const Setup st = make_setup(cfg);
  const ScenarioRecipe r = recipe_of(cfg);
  json j = json_header(cfg, "manufacture");
  j["recipe"] = r.name;
  // assumptions first, so a failing recipe still leaves its report behind
  const AssumptionReport a = check_assumptions(recipe_u1(st.g, r, r.t0), recipe_H1(st.g, r, r.t0),
                                               st.d, full_mask(*st.g));
  j["assumptions"] = {{"min_det_E_u1", num(a.min_det)},
                      {"min_cross_grad_d_rot_H1", num(a.min_cross)},
                      {"threshold", a.threshold},
                      {"pass_det", a.pass_det()},
                      {"pass_cross", a.pass_cross()},
                      {"pass", a.pass()}};
  if (!a.pass()) {
    write_json(out / "manufacture.json", j);
    log << "manufacture " << r.name << ": assumptions fail\n";
    return {kExitNumerical, "assumption_failure",
            "recipe '" + r.name + "' fails the coefficient assumptions (min |det E(u1)| = " +
                csv_number(a.min_det) + ", min |grad d x rot H1| = " + csv_number(a.min_cross) + ")"};
  }
  const Scenario sc = manufacture_scenario(st.g, st.d, r);
  const int m0 = static_cast<int>(std::lround(r.t0 / st.g->dt()));
  auto res_json = [](const ResidualSet& s) {
    return json{{"momentum_max", num(s.max_momentum())},
                {"induction_max", num(s.max_induction())},
                {"div_u_max", num(s.max_div_u())},
                {"div_H_max", num(s.max_div_H())}};
  };
  j["residuals"] = {{"state1", res_json(residual_mhd(sc.s1))},
                    {"state2", res_json(residual_mhd(sc.s2))}};
  json diff = json::array();
  for (int k = 0; k <= 2; ++k) {
    const ResidualSet rd = residual_difference(sc.pack, sc.s1, sc.s2, k);
    diff.push_back({{"order", k}, {"momentum_max", num(rd.max_momentum())},
                    {"induction_max", num(rd.max_induction())}});
  }
  j["difference_residuals"] = diff;

  std::vector<std::string> files;
  auto dump = [&](const std::string& name, const Scalar& f) {
    write_field_csv((out / name).string(), f);
    files.push_back(name);
  };
  dump("nu_diff.csv", sc.nu_true);
  dump("kappa_diff.csv", sc.kappa_true);
  const char* ax[3] = {"x", "y", "z"};
  for (int c = 0; c < 3; ++c) dump(std::string("u_diff_t0_") + ax[c] + ".csv", sc.pack.u[m0][c]);
  for (int c = 0; c < 3; ++c) dump(std::string("H_diff_t0_") + ax[c] + ".csv", sc.pack.H[m0][c]);
  dump("p_diff_t0.csv", sc.pack.p[m0]);
  j["fields"] = files;
  write_json(out / "manufacture.json", j);
  log << "manufacture " << r.name << ": state residuals " << residual_mhd(sc.s1).max_abs() << ", "
      << residual_mhd(sc.s2).max_abs() << "\n";
  return {};
}

SoftFailure cmd_selftest(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  SelftestOptions opt;
  opt.threads = cfg.threads;
  opt.scratch_dir = (out / "selftest_scratch").string();
  const SelftestReport rep = run_selftest(opt, [&](const CheckResult& c) {
    log << format_check(c) << "\n" << std::flush;
  });
  std::error_code ec;
  fs::remove_all(opt.scratch_dir, ec);
  json j = json_header(cfg, "selftest");
  json checks = json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"criterion", c.criterion},
                      {"name", c.name},
                      {"pass", c.pass},
                      {"gating", c.gating},
                      {"detail", c.detail},
                      {"seconds", c.seconds}});
  j["checks"] = checks;
  j["seconds"] = rep.seconds;
  j["gating_pass"] = rep.gating_pass();
  j["all_pass"] = rep.all_pass();
  write_json(out / "selftest.json", j);
  if (!rep.gating_pass()) return {kExitNumerical, "selftest", "invariant checks failed"};
  return {};
}

}  // namespace

std::vector<std::string> known_commands() {
  return {"verify", "reconstruct", "stability", "manufacture", "selftest"};
}

ExperimentConfig resolve_config(const CommandOptions& o) {
  const auto cmds = known_commands();
  if (std::find(cmds.begin(), cmds.end(), o.command) == cmds.end())
    throw ConfigError("unknown command '" + o.command + "'");
  ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    cfg = parse_config_file(o.config_path);
    require_sections(cfg, o.command);
  }
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads must be >= 1");
    cfg.threads = *o.threads;
  }
  if (o.seed) {
    const std::size_t k = cfg.scenario.seeds.size();
    for (std::size_t i = 0; i < k; ++i) cfg.scenario.seeds[i] = *o.seed + i;
  }
  return cfg;
}

std::string resolve_out_dir(const CommandOptions& o, const ExperimentConfig& cfg) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "out";
}

int run_command(const std::string& command, const ExperimentConfig& cfg,
                const std::string& out_dir, std::ostream& log) {
  const fs::path out(out_dir);
  SoftFailure f;
  try {
    fs::create_directories(out);
    fs::remove(out / "error.json");
    if (command == "verify")
      f = cmd_verify(cfg, out, log);
    else if (command == "reconstruct")
      f = cmd_reconstruct(cfg, out, log);
    else if (command == "stability")
      f = cmd_stability(cfg, out, log);
    else if (command == "manufacture")
      f = cmd_manufacture(cfg, out, log);
    else if (command == "selftest")
      f = cmd_selftest(cfg, out, log);
    else
      throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    f = {kExitConfig, "config", e.what()};
  } catch (const PreconditionError& e) {
    f = {kExitPrecondition, "precondition", e.what()};
  } catch (const fs::filesystem_error& e) {
    f = {kExitPrecondition, "filesystem", e.what()};
  } catch (const NumericalError& e) {
    f = {kExitNumerical, "numerical", e.what()};
  } catch (const std::exception& e) {
    f = {kExitNumerical, "internal", e.what()};
  }
  if (f.code != kExitOk) {
    write_error(out, command, f.code, f.kind, f.message);
    log << "error (" << f.kind << "): " << f.message << "\n";
  }
  return f.code;
}

int run(const CommandOptions& o, std::ostream& log) {
  ExperimentConfig cfg;
  try {
    cfg = resolve_config(o);
  } catch (const ConfigError& e) {
    write_error(resolve_out_dir(o, ExperimentConfig{}), o.command, kExitConfig, "config", e.what());
    log << "error (config): " << e.what() << "\n";
    return kExitConfig;
  }
  return run_command(o.command, cfg, resolve_out_dir(o, cfg), log);
}

std::string strip_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("# generated ", 0) == 0) continue;
    if (line.find("\"generated\":") != std::string::npos) continue;
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace cmhd
