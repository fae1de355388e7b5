#pragma once

// Run configuration for the CLI: a small schema with strict unknown-key
// rejection, readable from TOML (primary) or JSON. The TOML reader covers the
// subset this schema needs: one-level [section] tables, key = value lines
// with strings, numbers, booleans, and single-line arrays, and # comments.
// Both formats funnel into the same mapping code, and render_config_json
// produces a canonical JSON form that parses back to an equal RunConfig,
// which is what run artifacts embed.

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <map>
#include <set>
#include <vector>

#include <json.hpp>

#include "smallmass/common.hpp"

namespace smallmass {

struct GridConfig {
  double T = 1.0;
  std::int64_t steps = 0;  // 0 = derive from dt or dt_rule
  double dt = 0.0;         // 0 = derive from dt_rule
  std::string dt_rule = "eps/20";
  bool operator==(const GridConfig&) const = default;
};

struct EnsembleConfig {
  std::int64_t n_paths = 1000;
  std::uint64_t master_seed = 20260815;
  int threads = 0;  // 0 = hardware concurrency
  bool operator==(const EnsembleConfig&) const = default;
};

struct IntegratorConfig {
  std::string scheme = "explicit-em";  // or "semi-implicit-drag"
  std::int64_t agg = 1;
  bool operator==(const IntegratorConfig&) const = default;
};

struct SweepConfig {
  std::vector<double> eps;
  double p = 2.0;
  std::string mode = "sup-expectation";  // or "expectation-sup"
  double q_order = 1.0;
  bool include_noise_drift = true;
  bool operator==(const SweepConfig&) const = default;
};

struct SimulateConfig {
  double eps = 0.1;
  std::string layout = "long";  // or "per-path"
  std::string store = "both";   // "full", "limit", or "both"
  bool operator==(const SimulateConfig&) const = default;
};

struct LimitCoeffsConfig {
  double t = 0.0;
  std::vector<double> q_min{-2.0}, q_max{2.0};
  std::vector<std::int64_t> q_count{41};
  bool operator==(const LimitCoeffsConfig&) const = default;
};

struct ValidateConfig {
  double t0 = 0.0, t1 = 1.0;
  double q_lo = -5.0, q_hi = 5.0, z_lo = -5.0, z_hi = 5.0;
  std::int64_t samples = 4096;
  std::vector<double> eps{1.0, 0.1, 0.01};
  std::uint64_t seed = 2026;
  bool operator==(const ValidateConfig&) const = default;
};

struct InitialConfig {
  std::vector<double> q0;  // empty = ones(n)
  std::string p0 = "psi";  // or "values"
  std::vector<double> p0_values;
  bool operator==(const InitialConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"json", "csv"};
  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  std::string system;
  std::map<std::string, double> params;
  GridConfig grid;
  EnsembleConfig ensemble;
  IntegratorConfig integrator;
  SweepConfig sweep;
  SimulateConfig simulate;
  LimitCoeffsConfig limit_coeffs;
  ValidateConfig validate;
  InitialConfig initial;
  OutputConfig output;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

// --- minimal TOML subset ---------------------------------------------------

inline std::string toml_trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool toml_ident(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum((unsigned char)c) || c == '_' || c == '-')) return false;
  return true;
}

inline std::string toml_strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

inline nlohmann::json toml_scalar(const std::string& tok, int lineno) {
  if (tok.size() >= 2 && tok.front() == '"') {
    if (tok.back() != '"' || tok.size() < 2)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": unterminated string");
    return tok.substr(1, tok.size() - 2);
  }
  if (tok == "true") return true;
  if (tok == "false") return false;
  // integer or float
  bool integral = !tok.empty();
  for (std::size_t i = 0; i < tok.size(); ++i) {
    const char c = tok[i];
    if (!(std::isdigit((unsigned char)c) || (i == 0 && (c == '+' || c == '-'))))
      integral = false;
  }
  errno = 0;
  char* end = nullptr;
  if (integral) {
    if (tok[0] == '-') {
      const long long v = std::strtoll(tok.c_str(), &end, 10);
      if (end == tok.c_str() + tok.size() && errno == 0)
        return (std::int64_t)v;
    } else {
      const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
      if (end == tok.c_str() + tok.size() && errno == 0) {
        if (v <= (unsigned long long)std::numeric_limits<std::int64_t>::max())
          return (std::int64_t)v;
        return (std::uint64_t)v;
      }
    }
  }
  errno = 0;
  const double d = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE)
    throw ConfigError("line " + std::to_string(lineno) +
                      ": cannot parse value '" + tok + "'");
  return d;
}

inline nlohmann::json toml_value(const std::string& tok, int lineno) {
  if (!tok.empty() && tok.front() == '[') {
    if (tok.back() != ']')
      throw ConfigError("line " + std::to_string(lineno) +
                        ": arrays must close on the same line");
    nlohmann::json arr = nlohmann::json::array();
    const std::string inner = tok.substr(1, tok.size() - 2);
    std::string cur;
    bool in_str = false;
    auto flush = [&]() {
      const std::string t = toml_trim(cur);
      if (!t.empty()) arr.push_back(toml_scalar(t, lineno));
      cur.clear();
    };
    for (char c : inner) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        flush();
        continue;
      }
      cur += c;
    }
    if (in_str)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": unterminated string in array");
    flush();
    return arr;
  }
  return toml_scalar(tok, lineno);
}

inline nlohmann::json toml_parse(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  std::string section;
  int lineno = 0;
  std::istringstream is(text);
  std::string raw;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = toml_trim(toml_strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) +
                          ": malformed section header");
      section = toml_trim(line.substr(1, line.size() - 2));
      if (!toml_ident(section))
        throw ConfigError("line " + std::to_string(lineno) +
                          ": bad section name '" + section +
                          "' (one-level tables only)");
      if (root.contains(section))
        throw ConfigError("line " + std::to_string(lineno) +
                          ": duplicate section [" + section + "]");
      root[section] = nlohmann::json::object();
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = toml_trim(line.substr(0, eq));
    const std::string val = toml_trim(line.substr(eq + 1));
    if (!toml_ident(key))
      throw ConfigError("line " + std::to_string(lineno) +
                        ": bad key '" + key + "'");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) +
                        ": key outside any [section]");
    if (val.empty())
      throw ConfigError("line " + std::to_string(lineno) +
                        ": missing value for '" + key + "'");
    if (root[section].contains(key))
      throw ConfigError("line " + std::to_string(lineno) +
                        ": duplicate key '" + key + "' in [" + section + "]");
    root[section][key] = toml_value(val, lineno);
  }
  return root;
}

// --- schema mapping --------------------------------------------------------

class SectionReader {
 public:
  SectionReader(const nlohmann::json& root, const std::string& name)
      : name_(name) {
    if (root.contains(name)) {
      if (!root.at(name).is_object())
        throw ConfigError("[" + name + "] must be a table");
      j_ = root.at(name);
    } else {
      j_ = nlohmann::json::object();
    }
  }

  bool has(const std::string& key) {
    return j_.contains(key);
  }

  double num(const std::string& key, double def) {
    if (!mark(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) bad_type(key, "a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t def) {
    if (!mark(key)) return def;
    return to_int(j_.at(key), key);
  }

  std::uint64_t uinteger(const std::string& key, std::uint64_t def) {
    if (!mark(key)) return def;
    const auto& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const std::int64_t i = to_int(v, key);
    if (i < 0) throw ConfigError("[" + name_ + "] key '" + key +
                                 "' must be non-negative");
    return (std::uint64_t)i;
  }

  bool boolean(const std::string& key, bool def) {
    if (!mark(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) bad_type(key, "a boolean");
    return v.get<bool>();
  }

  std::string str(const std::string& key, const std::string& def) {
    if (!mark(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) bad_type(key, "a string");
    return v.get<std::string>();
  }

  std::vector<double> num_array(const std::string& key,
                                std::vector<double> def) {
    if (!mark(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) bad_type(key, "an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) bad_type(key, "an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::int64_t> int_array(const std::string& key,
                                      std::vector<std::int64_t> def) {
    if (!mark(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) bad_type(key, "an array of integers");
    std::vector<std::int64_t> out;
    for (const auto& e : v) out.push_back(to_int(e, key));
    return out;
  }

  std::vector<std::string> str_array(const std::string& key,
                                     std::vector<std::string> def) {
    if (!mark(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) bad_type(key, "an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) bad_type(key, "an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  std::map<std::string, double> all_numbers() {
    std::map<std::string, double> out;
    for (const auto& [k, v] : j_.items()) {
      mark(k);
      if (!v.is_number())
        throw ConfigError("[" + name_ + "] key '" + k +
                          "' must be a number");
      out[k] = v.get<double>();
    }
    return out;
  }

  void finish() {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k))
        throw ConfigError("[" + name_ + "] unknown key '" + k + "'");
  }

 private:
  bool mark(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  [[noreturn]] void bad_type(const std::string& key, const char* what) {
    throw ConfigError("[" + name_ + "] key '" + key + "' must be " +
                      what);
  }
  std::int64_t to_int(const nlohmann::json& v, const std::string& key) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_unsigned()) {
      const std::uint64_t u = v.get<std::uint64_t>();
      if (u > (std::uint64_t)std::numeric_limits<std::int64_t>::max())
        throw ConfigError("[" + name_ + "] key '" + key +
                          "' is too large");
      return (std::int64_t)u;
    }
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d == std::floor(d) && std::abs(d) < 9.0e15) return (std::int64_t)d;
    }
    throw ConfigError("[" + name_ + "] key '" + key +
                      "' must be an integer");
  }

  nlohmann::json j_;
  std::string name_;
  std::set<std::string> seen_;
};

inline void check_choice(const std::string& section, const std::string& key,
                         const std::string& value,
                         std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string opts;
  for (const char* a : allowed) opts += std::string(" '") + a + "'";
  throw ConfigError("[" + section + "] key '" + key + "' must be one of" +
                    opts + ", got '" + value + "'");
}

inline double parse_dt_rule(const std::string& rule) {
  if (rule.rfind("eps/", 0) != 0)
    throw ConfigError("dt_rule must look like 'eps/20'");
  errno = 0;
  char* end = nullptr;
  const double div = std::strtod(rule.c_str() + 4, &end);
  if (end != rule.c_str() + rule.size() || !(div > 0.0) || errno == ERANGE)
    throw ConfigError("dt_rule must look like 'eps/20'");
  return div;
}

inline RunConfig map_config(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("top level must be a table");
  static const std::set<std::string> known_sections = {
      "system",   "params",       "grid",     "ensemble", "integrator",
      "sweep",    "simulate",     "limit_coeffs", "validate", "initial",
      "output"};
  for (const auto& [k, v] : root.items())
    if (!known_sections.count(k))
      throw ConfigError("unknown section [" + k + "]");

  RunConfig c;

  SectionReader sys(root, "system");
  c.system = sys.str("name", "");
  sys.finish();
  if (c.system.empty())
    throw ConfigError("[system] name is required");

  SectionReader par(root, "params");
  c.params = par.all_numbers();
  par.finish();

  SectionReader grid(root, "grid");
  c.grid.T = grid.num("T", c.grid.T);
  c.grid.steps = grid.integer("steps", c.grid.steps);
  c.grid.dt = grid.num("dt", c.grid.dt);
  c.grid.dt_rule = grid.str("dt_rule", c.grid.dt_rule);
  grid.finish();
  if (!(c.grid.T > 0.0)) throw ConfigError("[grid] T must be positive");
  if (c.grid.steps < 0) throw ConfigError("[grid] steps must be >= 0");
  if (c.grid.dt < 0.0) throw ConfigError("[grid] dt must be >= 0");
  if (c.grid.steps > 0 && c.grid.dt > 0.0)
    throw ConfigError("[grid] give steps or dt, not both");
  parse_dt_rule(c.grid.dt_rule);

  SectionReader ens(root, "ensemble");
  c.ensemble.n_paths = ens.integer("n_paths", c.ensemble.n_paths);
  c.ensemble.master_seed = ens.uinteger("master_seed", c.ensemble.master_seed);
  c.ensemble.threads = (int)ens.integer("threads", c.ensemble.threads);
  ens.finish();
  if (c.ensemble.n_paths < 1)
    throw ConfigError("[ensemble] n_paths must be >= 1");
  if (c.ensemble.threads < 0)
    throw ConfigError("[ensemble] threads must be >= 0");

  SectionReader integ(root, "integrator");
  c.integrator.scheme = integ.str("scheme", c.integrator.scheme);
  c.integrator.agg = integ.integer("agg", c.integrator.agg);
  integ.finish();
  check_choice("integrator", "scheme", c.integrator.scheme,
               {"explicit-em", "semi-implicit-drag"});
  if (c.integrator.agg < 1)
    throw ConfigError("[integrator] agg must be >= 1");

  SectionReader sweep(root, "sweep");
  c.sweep.eps = sweep.num_array("eps", c.sweep.eps);
  c.sweep.p = sweep.num("p", c.sweep.p);
  c.sweep.mode = sweep.str("mode", c.sweep.mode);
  c.sweep.q_order = sweep.num("q_order", c.sweep.q_order);
  c.sweep.include_noise_drift =
      sweep.boolean("include_noise_drift", c.sweep.include_noise_drift);
  sweep.finish();
  check_choice("sweep", "mode", c.sweep.mode,
               {"sup-expectation", "expectation-sup"});
  for (double e : c.sweep.eps)
    if (!(e > 0.0))
      throw ConfigError("[sweep] eps entries must be positive");
  if (!(c.sweep.p > 0.0)) throw ConfigError("[sweep] p must be positive");
  if (!(c.sweep.q_order > 0.0))
    throw ConfigError("[sweep] q_order must be positive");

  SectionReader sim(root, "simulate");
  c.simulate.eps = sim.num("eps", c.simulate.eps);
  c.simulate.layout = sim.str("layout", c.simulate.layout);
  c.simulate.store = sim.str("store", c.simulate.store);
  sim.finish();
  check_choice("simulate", "layout", c.simulate.layout, {"long", "per-path"});
  check_choice("simulate", "store", c.simulate.store, {"full", "limit", "both"});
  if (!(c.simulate.eps > 0.0))
    throw ConfigError("[simulate] eps must be positive");

  SectionReader lc(root, "limit_coeffs");
  c.limit_coeffs.t = lc.num("t", c.limit_coeffs.t);
  c.limit_coeffs.q_min = lc.num_array("q_min", c.limit_coeffs.q_min);
  c.limit_coeffs.q_max = lc.num_array("q_max", c.limit_coeffs.q_max);
  c.limit_coeffs.q_count = lc.int_array("q_count", c.limit_coeffs.q_count);
  lc.finish();
  if (c.limit_coeffs.q_min.size() != c.limit_coeffs.q_max.size() ||
      c.limit_coeffs.q_min.size() != c.limit_coeffs.q_count.size())
    throw ConfigError(
        "[limit_coeffs] q_min, q_max, q_count must have equal length");
  for (std::int64_t cnt : c.limit_coeffs.q_count)
    if (cnt < 1)
      throw ConfigError("[limit_coeffs] q_count entries must be >= 1");

  SectionReader val(root, "validate");
  c.validate.t0 = val.num("t0", c.validate.t0);
  c.validate.t1 = val.num("t1", c.validate.t1);
  c.validate.q_lo = val.num("q_lo", c.validate.q_lo);
  c.validate.q_hi = val.num("q_hi", c.validate.q_hi);
  c.validate.z_lo = val.num("z_lo", c.validate.z_lo);
  c.validate.z_hi = val.num("z_hi", c.validate.z_hi);
  c.validate.samples = val.integer("samples", c.validate.samples);
  c.validate.eps = val.num_array("eps", c.validate.eps);
  c.validate.seed = val.uinteger("seed", c.validate.seed);
  val.finish();
  if (c.validate.samples < 64)
    throw ConfigError("[validate] samples must be >= 64");
  if (!(c.validate.t1 > c.validate.t0) || !(c.validate.q_hi > c.validate.q_lo) ||
      !(c.validate.z_hi > c.validate.z_lo))
    throw ConfigError("[validate] box bounds are inverted");
  for (double e : c.validate.eps)
    if (!(e > 0.0))
      throw ConfigError("[validate] eps entries must be positive");

  SectionReader init(root, "initial");
  c.initial.q0 = init.num_array("q0", c.initial.q0);
  c.initial.p0 = init.str("p0", c.initial.p0);
  c.initial.p0_values = init.num_array("p0_values", c.initial.p0_values);
  init.finish();
  check_choice("initial", "p0", c.initial.p0, {"psi", "values"});
  if (c.initial.p0 == "values" && c.initial.p0_values.empty())
    throw ConfigError("[initial] p0 = \"values\" needs p0_values");

  SectionReader out(root, "output");
  c.output.directory = out.str("directory", c.output.directory);
  c.output.formats = out.str_array("formats", c.output.formats);
  out.finish();
  if (c.output.directory.empty())
    throw ConfigError("[output] directory must not be empty");
  for (const auto& f : c.output.formats)
    check_choice("output", "formats", f, {"json", "csv"});

  return c;
}

}  // namespace detail

inline RunConfig parse_config_toml(const std::string& text) {
  return detail::map_config(detail::toml_parse(text));
}

inline RunConfig parse_config_json(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return detail::map_config(root);
}

inline RunConfig parse_config_file(const std::string& path) {
  const bool is_toml =
      path.size() >= 5 && path.substr(path.size() - 5) == ".toml";
  const bool is_json =
      path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  if (!is_toml && !is_json)
    throw ConfigError("'" + path + "' must end in .toml or .json");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return is_toml ? parse_config_toml(os.str()) : parse_config_json(os.str());
}

// Canonical JSON rendering; parse_config_json(render_config_json(c)) == c.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["system"]["name"] = c.system;
  j["params"] = nlohmann::json::object();
  for (const auto& [k, v] : c.params) j["params"][k] = v;
  j["grid"] = {{"T", c.grid.T},
               {"steps", c.grid.steps},
               {"dt", c.grid.dt},
               {"dt_rule", c.grid.dt_rule}};
  j["ensemble"] = {{"n_paths", c.ensemble.n_paths},
                   {"master_seed", c.ensemble.master_seed},
                   {"threads", c.ensemble.threads}};
  j["integrator"] = {{"scheme", c.integrator.scheme}, {"agg", c.integrator.agg}};
  j["sweep"] = {{"eps", c.sweep.eps},
                {"p", c.sweep.p},
                {"mode", c.sweep.mode},
                {"q_order", c.sweep.q_order},
                {"include_noise_drift", c.sweep.include_noise_drift}};
  j["simulate"] = {{"eps", c.simulate.eps},
                   {"layout", c.simulate.layout},
                   {"store", c.simulate.store}};
  j["limit_coeffs"] = {{"t", c.limit_coeffs.t},
                       {"q_min", c.limit_coeffs.q_min},
                       {"q_max", c.limit_coeffs.q_max},
                       {"q_count", c.limit_coeffs.q_count}};
  j["validate"] = {{"t0", c.validate.t0},       {"t1", c.validate.t1},
                   {"q_lo", c.validate.q_lo},   {"q_hi", c.validate.q_hi},
                   {"z_lo", c.validate.z_lo},   {"z_hi", c.validate.z_hi},
                   {"samples", c.validate.samples},
                   {"eps", c.validate.eps},     {"seed", c.validate.seed}};
  j["initial"] = {{"q0", c.initial.q0},
                  {"p0", c.initial.p0},
                  {"p0_values", c.initial.p0_values}};
  j["output"] = {{"directory", c.output.directory},
                 {"formats", c.output.formats}};
  return j;
}

inline std::string render_config_json(const RunConfig& c) {
  return config_to_json(c).dump(2) + "\n";
}

// dt resolution: explicit steps win, then explicit dt, then the eps rule.
inline std::int64_t resolve_steps(const GridConfig& g, double eps) {
  if (g.steps > 0) return g.steps;
  double dt = g.dt;
  if (!(dt > 0.0)) {
    require(eps > 0.0, "resolve_steps: eps must be positive");
    dt = eps / detail::parse_dt_rule(g.dt_rule);
  }
  if (!(dt > 0.0) || !(dt < g.T * 1.0e12))
    throw ConfigError("derived dt is unusable");
  return std::max<std::int64_t>(
      1, (std::int64_t)std::llround(std::ceil(g.T / dt - 1.0e-9)));
}

}  // namespace smallmass
