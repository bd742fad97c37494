#include "cmhd/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cmhd/carleman.hpp"

namespace cmhd {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"grid", {"n", "nt", "T", "t0"}},
      {"weights", {"lambda_list", "s_list", "beta_margin", "eps", "spread_threshold", "endpoint_s"}},
      {"scenario", {"recipe", "diff_scale", "envelope", "seeds"}},
      {"verify", {"estimates"}},
      {"reconstruction",
       {"mode", "weighting", "derivatives", "diffusion", "s", "lambda", "eps", "beta_margin",
        "rho_gamma_factor", "rho_reg_factor", "grad_q_block", "tol", "max_iter", "sigma"}},
      {"stability", {"sigmas", "noisy_rho_reg_factor", "tol"}},
      {"run", {"threads", "output_dir"}},
  };
  return s;
}

std::string where(const std::string& origin, const std::string& sec, const std::string& key) {
  return origin + ": [" + sec + "] " + key;
}

template <class T>
T parse_value(const std::string& raw, const std::string& at) {
  try {
    return boost::lexical_cast<T>(boost::trim_copy(raw));
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError(at + ": cannot parse '" + raw + "'");
  }
}

template <>
bool parse_value<bool>(const std::string& raw, const std::string& at) {
  const std::string v = boost::to_lower_copy(boost::trim_copy(raw));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(at + ": expected a boolean, got '" + raw + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& raw, const std::string& at) {
  std::vector<std::string> parts;
  const std::string trimmed = boost::trim_copy(raw);
  if (trimmed.empty()) throw ConfigError(at + ": list is empty");
  boost::split(parts, trimmed, boost::is_any_of(","));
  std::vector<T> out;
  for (const auto& p : parts) {
    if (boost::trim_copy(p).empty()) throw ConfigError(at + ": empty list entry");
    out.push_back(parse_value<T>(p, at));
  }
  return out;
}

template <class E>
E parse_enum(const std::string& raw, const std::string& at,
             const std::vector<std::pair<std::string, E>>& options) {
  const std::string v = boost::to_lower_copy(boost::trim_copy(raw));
  for (const auto& [name, e] : options)
    if (name == v) return e;
  std::string names;
  for (const auto& o : options) names += (names.empty() ? "" : ", ") + o.first;
  throw ConfigError(at + ": unknown value '" + raw + "' (expected one of " + names + ")");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += fmt(v[i]);
    else
      s += boost::lexical_cast<std::string>(v[i]);
  }
  return s;
}

void validate(const ExperimentConfig& c, const std::string& origin) {
  auto fail = [&](const std::string& sec, const std::string& key, const std::string& why) {
    throw ConfigError(where(origin, sec, key) + ": " + why);
  };
  if (c.grid.n < 8) fail("grid", "n", "must be >= 8");
  if (c.grid.nt < 4) fail("grid", "nt", "must be >= 4");
  if (!(c.grid.T > 0.0)) fail("grid", "T", "must be > 0");
  if (!(c.grid.t0 > 0.0 && c.grid.t0 < c.grid.T)) fail("grid", "t0", "must lie in (0, T)");
  if (c.weights.lambda_list.empty()) fail("weights", "lambda_list", "list is empty");
  if (c.weights.s_list.empty()) fail("weights", "s_list", "list is empty");
  for (double v : c.weights.lambda_list)
    if (!(v >= 1.0)) fail("weights", "lambda_list", "entries must be >= 1");
  for (double v : c.weights.s_list)
    if (!(v >= 1.0)) fail("weights", "s_list", "entries must be >= 1");
  if (!(c.weights.eps > 0.0)) fail("weights", "eps", "must be > 0");
  if (!(c.weights.beta_margin > 0.0 && c.weights.beta_margin < 1.0))
    fail("weights", "beta_margin", "must lie in (0, 1)");
  if (!(c.weights.spread_threshold >= 1.0)) fail("weights", "spread_threshold", "must be >= 1");
  const auto recipes = known_recipes();
  if (std::find(recipes.begin(), recipes.end(), c.scenario.recipe) == recipes.end())
    fail("scenario", "recipe", "unknown recipe '" + c.scenario.recipe + "'");
  if (c.scenario.seeds.empty()) fail("scenario", "seeds", "list is empty");
  const auto ids = known_estimates();
  for (const auto& e : c.estimates)
    if (std::find(ids.begin(), ids.end(), e) == ids.end())
      fail("verify", "estimates", "unknown estimate id '" + e + "'");
  if (!(c.recon.s >= 1.0)) fail("reconstruction", "s", "must be >= 1");
  if (!(c.recon.lambda >= 1.0)) fail("reconstruction", "lambda", "must be >= 1");
  if (!(c.recon.eps > 0.0)) fail("reconstruction", "eps", "must be > 0");
  if (!(c.recon.rho_gamma_factor > 0.0)) fail("reconstruction", "rho_gamma_factor", "must be > 0");
  if (!(c.recon.rho_reg_factor >= 0.0)) fail("reconstruction", "rho_reg_factor", "must be >= 0");
  if (!(c.recon.tol > 0.0)) fail("reconstruction", "tol", "must be > 0");
  if (c.recon.max_iter < 1) fail("reconstruction", "max_iter", "must be >= 1");
  if (!(c.recon_sigma >= 0.0)) fail("reconstruction", "sigma", "must be >= 0");
  if (c.stability.sigmas.empty()) fail("stability", "sigmas", "list is empty");
  for (double v : c.stability.sigmas)
    if (!(v >= 0.0)) fail("stability", "sigmas", "entries must be >= 0");
  if (!(c.stability.noisy_rho_reg_factor >= 0.0))
    fail("stability", "noisy_rho_reg_factor", "must be >= 0");
  if (!(c.stability.tol > 0.0)) fail("stability", "tol", "must be > 0");
  if (c.threads < 1) fail("run", "threads", "must be >= 1");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  // the INI reader only knows ';' comments
  std::string cleaned;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const std::string t = boost::trim_left_copy(line);
      cleaned += (!t.empty() && t[0] == '#') ? ";" : line;
      cleaned += '\n';
    }
  }
  pt::ptree tree;
  try {
    std::istringstream in(cleaned);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig c;
  for (const auto& [sec, body] : tree) {
    const auto it = schema().find(sec);
    if (body.empty() && !body.data().empty())
      throw ConfigError(origin + ": key '" + sec + "' outside any section");
    if (it == schema().end()) throw ConfigError(origin + ": unknown section [" + sec + "]");
    c.sections.insert(sec);
    for (const auto& [key, node] : body) {
      const auto& keys = it->second;
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError(where(origin, sec, key) + ": unknown key '" + key + "'");
      const std::string at = where(origin, sec, key);
      const std::string& v = node.data();
      if (sec == "grid") {
        if (key == "n") c.grid.n = parse_value<int>(v, at);
        if (key == "nt") c.grid.nt = parse_value<int>(v, at);
        if (key == "T") c.grid.T = parse_value<double>(v, at);
        if (key == "t0") c.grid.t0 = parse_value<double>(v, at);
      } else if (sec == "weights") {
        if (key == "lambda_list") c.weights.lambda_list = parse_list<double>(v, at);
        if (key == "s_list") c.weights.s_list = parse_list<double>(v, at);
        if (key == "beta_margin") c.weights.beta_margin = parse_value<double>(v, at);
        if (key == "eps") c.weights.eps = parse_value<double>(v, at);
        if (key == "spread_threshold") c.weights.spread_threshold = parse_value<double>(v, at);
        if (key == "endpoint_s") c.weights.endpoint_s = parse_value<double>(v, at);
      } else if (sec == "scenario") {
        if (key == "recipe") c.scenario.recipe = boost::trim_copy(v);
        if (key == "diff_scale") c.scenario.diff_scale = parse_value<double>(v, at);
        if (key == "envelope") c.scenario.envelope = parse_value<bool>(v, at);
        if (key == "seeds") c.scenario.seeds = parse_list<std::uint64_t>(v, at);
      } else if (sec == "verify") {
        const std::string t = boost::trim_copy(v);
        if (t == "all")
          c.estimates.clear();
        else
          c.estimates = parse_list<std::string>(v, at);
      } else if (sec == "reconstruction") {
        if (key == "mode")
          c.recon.mode = parse_enum<ReconMode>(v, at, {{"global", ReconMode::Global}, {"local", ReconMode::Local}});
        if (key == "weighting")
          c.recon.weighting = parse_enum<Weighting>(
              v, at, {{"carleman", Weighting::Carleman}, {"uniform", Weighting::Uniform}});
        if (key == "derivatives")
          c.recon.deriv = parse_enum<DerivMode>(
              v, at, {{"clean", DerivMode::Clean}, {"realistic", DerivMode::Realistic}});
        if (key == "diffusion")
          c.recon.diffusion = parse_enum<DiffusionForm>(
              v, at, {{"conservative", DiffusionForm::Conservative}, {"expanded", DiffusionForm::Expanded}});
        if (key == "s") c.recon.s = parse_value<double>(v, at);
        if (key == "lambda") c.recon.lambda = parse_value<double>(v, at);
        if (key == "eps") c.recon.eps = parse_value<double>(v, at);
        if (key == "beta_margin") c.recon.beta_margin = parse_value<double>(v, at);
        if (key == "rho_gamma_factor") c.recon.rho_gamma_factor = parse_value<double>(v, at);
        if (key == "rho_reg_factor") c.recon.rho_reg_factor = parse_value<double>(v, at);
        if (key == "grad_q_block") c.recon.grad_q_block = parse_value<bool>(v, at);
        if (key == "tol") c.recon.tol = parse_value<double>(v, at);
        if (key == "max_iter") c.recon.max_iter = parse_value<int>(v, at);
        if (key == "sigma") c.recon_sigma = parse_value<double>(v, at);
      } else if (sec == "stability") {
        if (key == "sigmas") c.stability.sigmas = parse_list<double>(v, at);
        if (key == "noisy_rho_reg_factor") c.stability.noisy_rho_reg_factor = parse_value<double>(v, at);
        if (key == "tol") c.stability.tol = parse_value<double>(v, at);
      } else if (sec == "run") {
        if (key == "threads") c.threads = parse_value<int>(v, at);
        if (key == "output_dir") c.output_dir = boost::trim_copy(v);
      }
    }
  }
  validate(c, origin);
  return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string canonical_dump(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "[grid]\n"
     << "n = " << c.grid.n << "\n"
     << "nt = " << c.grid.nt << "\n"
     << "T = " << fmt(c.grid.T) << "\n"
     << "t0 = " << fmt(c.grid.t0) << "\n\n";
  os << "[weights]\n"
     << "lambda_list = " << join(c.weights.lambda_list) << "\n"
     << "s_list = " << join(c.weights.s_list) << "\n"
     << "beta_margin = " << fmt(c.weights.beta_margin) << "\n"
     << "eps = " << fmt(c.weights.eps) << "\n"
     << "spread_threshold = " << fmt(c.weights.spread_threshold) << "\n"
     << "endpoint_s = " << fmt(c.weights.endpoint_s) << "\n\n";
  os << "[scenario]\n"
     << "recipe = " << c.scenario.recipe << "\n"
     << "diff_scale = " << fmt(c.scenario.diff_scale) << "\n"
     << "envelope = " << (c.scenario.envelope ? "true" : "false") << "\n"
     << "seeds = " << join(c.scenario.seeds) << "\n\n";
  os << "[verify]\n"
     << "estimates = " << (c.estimates.empty() ? std::string("all") : join(c.estimates)) << "\n\n";
  os << "[reconstruction]\n"
     << "mode = " << to_string(c.recon.mode) << "\n"
     << "weighting = " << to_string(c.recon.weighting) << "\n"
     << "derivatives = " << to_string(c.recon.deriv) << "\n"
     << "diffusion = " << to_string(c.recon.diffusion) << "\n"
     << "s = " << fmt(c.recon.s) << "\n"
     << "lambda = " << fmt(c.recon.lambda) << "\n"
     << "eps = " << fmt(c.recon.eps) << "\n"
     << "beta_margin = " << fmt(c.recon.beta_margin) << "\n"
     << "rho_gamma_factor = " << fmt(c.recon.rho_gamma_factor) << "\n"
     << "rho_reg_factor = " << fmt(c.recon.rho_reg_factor) << "\n"
     << "grad_q_block = " << (c.recon.grad_q_block ? "true" : "false") << "\n"
     << "tol = " << fmt(c.recon.tol) << "\n"
     << "max_iter = " << c.recon.max_iter << "\n"
     << "sigma = " << fmt(c.recon_sigma) << "\n\n";
  os << "[stability]\n"
     << "sigmas = " << join(c.stability.sigmas) << "\n"
     << "noisy_rho_reg_factor = " << fmt(c.stability.noisy_rho_reg_factor) << "\n"
     << "tol = " << fmt(c.stability.tol) << "\n\n";
  os << "[run]\n"
     << "threads = " << c.threads << "\n"
     << "output_dir = " << c.output_dir << "\n";
  return os.str();
}

std::vector<std::string> required_sections(const std::string& command) {
  if (command == "verify") return {"grid", "weights"};
  if (command == "reconstruct") return {"grid", "reconstruction"};
  if (command == "stability") return {"grid", "reconstruction", "stability"};
  if (command == "manufacture") return {"grid", "scenario"};
  if (command == "selftest") return {};
  throw ConfigError("unknown command '" + command + "'");
}

void require_sections(const ExperimentConfig& c, const std::string& command) {
  for (const auto& s : required_sections(command))
    if (!c.sections.count(s))
      throw ConfigError("config lacks section [" + s + "] required by '" + command + "'");
}

}  // namespace cmhd
