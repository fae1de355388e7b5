// smallmass: drive the coupled full/limiting dynamics from a config file and
// drop reproducible artifacts. Every JSON artifact embeds the resolved config
// (including flag overrides) and the master seed, and contains no timestamps,
// so a rerun with the same invocation is byte-identical.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smallmass/config.hpp"
#include "smallmass/core.hpp"
#include "smallmass/experiments.hpp"
#include "smallmass/homogenize.hpp"
#include "smallmass/sde.hpp"
#include "smallmass/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smallmass;

namespace {

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

bool wants_format(const RunConfig& cfg, const std::string& f) {
  for (const auto& x : cfg.output.formats)
    if (x == f) return true;
  return false;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw Error("short write to '" + path.string() + "'");
}

json artifact_head(const std::string& command, const RunConfig& cfg) {
  json j;
  j["schema_version"] = "1";
  j["command"] = command;
  j["config"] = config_to_json(cfg);
  return j;
}

void write_meta(const fs::path& csv_path, const std::string& command,
                const RunConfig& cfg, const std::vector<std::string>& columns) {
  json meta = artifact_head(command, cfg);
  meta["columns"] = columns;
  fs::path p = csv_path;
  p.replace_extension(".meta.json");
  write_text(p, meta.dump(2) + "\n");
}

Scheme parse_scheme(const std::string& s) {
  return s == "semi-implicit-drag" ? Scheme::SemiImplicitDrag
                                   : Scheme::ExplicitEM;
}

Vec resolve_q0(const RunConfig& cfg, const SystemSpec& s) {
  if (cfg.initial.q0.empty()) return Vec::Ones(s.n);
  if ((int)cfg.initial.q0.size() != s.n)
    throw ConfigError("[initial] q0 has " +
                      std::to_string(cfg.initial.q0.size()) +
                      " entries, system needs " + std::to_string(s.n));
  return Eigen::Map<const Vec>(cfg.initial.q0.data(), (Eigen::Index)cfg.initial.q0.size());
}

std::vector<std::string> full_columns(int n, bool long_format) {
  std::vector<std::string> cols;
  if (long_format) cols.push_back("path_index");
  cols.push_back("t");
  for (int i = 1; i <= n; ++i) cols.push_back("q_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) cols.push_back("p_" + std::to_string(i));
  return cols;
}

std::vector<std::string> limit_columns(int n, bool long_format) {
  std::vector<std::string> cols;
  if (long_format) cols.push_back("path_index");
  cols.push_back("t");
  for (int i = 1; i <= n; ++i) cols.push_back("q_" + std::to_string(i));
  return cols;
}

std::string pad_index(std::int64_t i) {
  std::string s = std::to_string(i);
  while (s.size() < 6) s.insert(s.begin(), '0');
  return s;
}

// --- subcommands -----------------------------------------------------------

int cmd_simulate(const RunConfig& cfg, const SystemSpec& s, int threads) {
  const double eps = cfg.simulate.eps;
  TimeGrid grid{0.0, cfg.grid.T, resolve_steps(cfg.grid, eps)};
  grid.validate();
  if (grid.steps % cfg.integrator.agg != 0)
    throw ConfigError("[integrator] agg must divide the step count (" +
                      std::to_string(grid.steps) + ")");

  const Vec q0 = resolve_q0(cfg, s);
  State x0;
  x0.t = grid.t0;
  x0.q = q0;
  if (cfg.initial.p0 == "psi") {
    x0.p = eval_psi(s, grid.t0, q0);
  } else {
    if ((int)cfg.initial.p0_values.size() != s.n)
      throw ConfigError("[initial] p0_values has " +
                        std::to_string(cfg.initial.p0_values.size()) +
                        " entries, system needs " + std::to_string(s.n));
    x0.p = Eigen::Map<const Vec>(cfg.initial.p0_values.data(), (Eigen::Index)s.n);
  }

  PairOptions opt;
  opt.scheme = parse_scheme(cfg.integrator.scheme);
  opt.agg = cfg.integrator.agg;
  opt.run_full = cfg.simulate.store != "limit";
  opt.run_limit = cfg.simulate.store != "full";

  const std::int64_t n_paths = cfg.ensemble.n_paths;
  std::vector<PairPath> paths((std::size_t)n_paths);
  parallel_blocks(n_paths, 64, resolve_threads(threads),
                  [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t i = lo; i < hi; ++i) {
                      NoisePath noise{cfg.ensemble.master_seed, i, s.k, grid};
                      paths[(std::size_t)i] =
                          integrate_pair(s, eps, x0, q0, grid, noise, opt);
                    }
                  });

  const fs::path dir(cfg.output.directory);
  std::vector<std::string> files;
  if (wants_format(cfg, "csv")) {
    const bool json_meta = wants_format(cfg, "json");
    if (cfg.simulate.layout == "long") {
      if (opt.run_full) {
        std::ostringstream os;
        write_full_csv_header(os, s.n, true);
        for (std::int64_t i = 0; i < n_paths; ++i)
          write_full_csv_rows(os, paths[(std::size_t)i], i, true);
        write_text(dir / "trajectories_full.csv", os.str());
        files.push_back("trajectories_full.csv");
        if (json_meta)
          write_meta(dir / "trajectories_full.csv", "simulate", cfg,
                     full_columns(s.n, true));
      }
      if (opt.run_limit) {
        std::ostringstream os;
        write_limit_csv_header(os, s.n, true);
        for (std::int64_t i = 0; i < n_paths; ++i)
          write_limit_csv_rows(os, paths[(std::size_t)i], i, true);
        write_text(dir / "trajectories_limit.csv", os.str());
        files.push_back("trajectories_limit.csv");
        if (json_meta)
          write_meta(dir / "trajectories_limit.csv", "simulate", cfg,
                     limit_columns(s.n, true));
      }
    } else {
      for (std::int64_t i = 0; i < n_paths; ++i) {
        if (opt.run_full) {
          std::ostringstream os;
          write_full_csv_header(os, s.n, false);
          write_full_csv_rows(os, paths[(std::size_t)i], i, false);
          const std::string name = "full_path_" + pad_index(i) + ".csv";
          write_text(dir / name, os.str());
          files.push_back(name);
          if (json_meta)
            write_meta(dir / name, "simulate", cfg, full_columns(s.n, false));
        }
        if (opt.run_limit) {
          std::ostringstream os;
          write_limit_csv_header(os, s.n, false);
          write_limit_csv_rows(os, paths[(std::size_t)i], i, false);
          const std::string name = "limit_path_" + pad_index(i) + ".csv";
          write_text(dir / name, os.str());
          files.push_back(name);
          if (json_meta)
            write_meta(dir / name, "simulate", cfg, limit_columns(s.n, false));
        }
      }
    }
  }
  if (wants_format(cfg, "json")) {
    json run = artifact_head("simulate", cfg);
    run["eps"] = eps;
    run["steps"] = grid.steps;
    run["dt"] = grid.dt();
    run["files"] = files;
    write_text(dir / "simulate_run.json", run.dump(2) + "\n");
  }
  std::cout << "simulate: " << n_paths << " paths, " << grid.steps
            << " steps, wrote " << files.size() << " csv file(s) to "
            << cfg.output.directory << "\n";
  return 0;
}

int cmd_limit_coeffs(const RunConfig& cfg, const SystemSpec& s) {
  const auto& lc = cfg.limit_coeffs;
  if ((int)lc.q_count.size() != s.n)
    throw ConfigError("[limit_coeffs] grid has " +
                      std::to_string(lc.q_count.size()) +
                      " dimensions, system needs " + std::to_string(s.n));
  std::int64_t total = 1;
  for (std::int64_t c : lc.q_count) {
    total *= c;
    if (total > 2000000)
      throw ConfigError("[limit_coeffs] grid is too large");
  }

  json artifact = artifact_head("limit-coeffs", cfg);
  artifact["system"] = s.name;
  artifact["n"] = s.n;
  artifact["t"] = lc.t;
  json points = json::array();

  std::ostringstream csv;
  const bool csv_1d = s.n == 1 && wants_format(cfg, "csv");
  if (csv_1d)
    csv << "q,gamma_tilde,gamma_tilde_inv,J,S,limiting_drift,limiting_diffusion\n";

  std::vector<std::int64_t> idx((std::size_t)s.n, 0);
  Vec q(s.n);
  for (std::int64_t flat = 0; flat < total; ++flat) {
    for (int d = 0; d < s.n; ++d) {
      const std::int64_t c = lc.q_count[(std::size_t)d];
      q[d] = c == 1 ? lc.q_min[(std::size_t)d]
                    : lc.q_min[(std::size_t)d] +
                          (lc.q_max[(std::size_t)d] - lc.q_min[(std::size_t)d]) *
                              ((double)idx[(std::size_t)d] / (double)(c - 1));
    }
    DriftAssembly a = limiting_coeffs(s, lc.t, q);
    json pt;
    pt["q"] = vec_json(a.q);
    pt["gamma_tilde"] = mat_json(a.gamma_tilde);
    pt["gamma_tilde_inv"] = mat_json(a.gamma_tilde_inv);
    json Qj = json::array();
    for (const Mat& Qi : a.Q) Qj.push_back(mat_json(Qi));
    pt["Q"] = Qj;
    pt["J"] = mat_json(a.J);
    pt["S"] = vec_json(a.S);
    pt["limiting_drift"] = vec_json(a.limiting_drift);
    pt["limiting_diffusion"] = mat_json(a.limiting_diffusion);
    points.push_back(pt);
    if (csv_1d)
      csv << format_double(q[0]) << "," << format_double(a.gamma_tilde(0, 0))
          << "," << format_double(a.gamma_tilde_inv(0, 0)) << ","
          << format_double(a.J(0, 0)) << "," << format_double(a.S[0]) << ","
          << format_double(a.limiting_drift[0]) << ","
          << format_double(a.limiting_diffusion(0, 0)) << "\n";
    // odometer increment over the grid
    for (int d = s.n - 1; d >= 0; --d) {
      if (++idx[(std::size_t)d] < lc.q_count[(std::size_t)d]) break;
      idx[(std::size_t)d] = 0;
    }
  }
  artifact["points"] = points;

  const fs::path dir(cfg.output.directory);
  if (wants_format(cfg, "json"))
    write_text(dir / "limit_coeffs.json", artifact.dump(2) + "\n");
  if (csv_1d) {
    write_text(dir / "limit_coeffs.csv", csv.str());
    if (wants_format(cfg, "json"))
      write_meta(dir / "limit_coeffs.csv", "limit-coeffs", cfg,
                 {"q", "gamma_tilde", "gamma_tilde_inv", "J", "S",
                  "limiting_drift", "limiting_diffusion"});
  }
  std::cout << "limit-coeffs: " << total << " grid point(s) at t = "
            << format_double(lc.t) << "\n";
  return 0;
}

SweepOptions sweep_options(const RunConfig& cfg, int threads) {
  if (cfg.grid.steps > 0 || cfg.grid.dt > 0.0)
    throw ConfigError(
        "sweeps derive dt from [grid] dt_rule; remove steps/dt");
  if (cfg.initial.p0 != "psi")
    throw ConfigError("sweeps start at p0 = \"psi\"");
  if (cfg.sweep.eps.empty())
    throw ConfigError("[sweep] eps is required for this command");
  SweepOptions o;
  o.dt_divisor = detail::parse_dt_rule(cfg.grid.dt_rule);
  o.scheme = parse_scheme(cfg.integrator.scheme);
  o.include_noise_drift = cfg.sweep.include_noise_drift;
  o.agg = cfg.integrator.agg;
  o.master_seed = cfg.ensemble.master_seed;
  o.threads = threads;
  if (!cfg.initial.q0.empty())
    o.q0 = Eigen::Map<const Vec>(cfg.initial.q0.data(),
                                 (Eigen::Index)cfg.initial.q0.size());
  return o;
}

void print_convergence(const ConvergenceReport& rep) {
  std::cout << rep.target << " (" << rep.mode << ", p = " << format_double(rep.p)
            << ", T = " << format_double(rep.T) << ", " << rep.n_paths
            << " paths, dt = " << rep.dt_rule << ")\n";
  for (std::size_t i = 0; i < rep.eps_list.size(); ++i)
    std::cout << "  eps = " << format_double(rep.eps_list[i])
              << "  error = " << format_double(rep.errors[i])
              << "  stderr = " << format_double(rep.stderrs[i])
              << "  aborted = " << format_double(rep.aborted_fractions[i])
              << "\n";
  std::cout << "  slope = " << format_double(rep.slope) << " +- "
            << format_double(rep.slope_stderr)
            << "  intercept = " << format_double(rep.intercept) << "\n";
}

int cmd_converge(const RunConfig& cfg, const SystemSpec& s, int threads,
                 bool momentum) {
  SweepOptions o = sweep_options(cfg, threads);
  const ErrorMode mode = cfg.sweep.mode == "expectation-sup"
                             ? ErrorMode::ExpectationSup
                             : ErrorMode::SupExpectation;
  ConvergenceReport rep =
      momentum ? momentum_decay_sweep(s, cfg.sweep.eps, cfg.sweep.p, cfg.grid.T,
                                      cfg.ensemble.n_paths, o)
               : strong_error_sweep(s, cfg.sweep.eps, cfg.sweep.p, cfg.grid.T,
                                    cfg.ensemble.n_paths, mode, o);
  const std::string base = momentum ? "momentum" : "converge";
  const fs::path dir(cfg.output.directory);
  if (wants_format(cfg, "json")) {
    json artifact = artifact_head(base, cfg);
    artifact["report"] = json::parse(to_json(rep));
    write_text(dir / (base + "_report.json"), artifact.dump(2) + "\n");
  }
  if (wants_format(cfg, "csv")) {
    std::ostringstream os;
    write_csv(os, rep);
    write_text(dir / (base + "_errors.csv"), os.str());
    if (wants_format(cfg, "json"))
      write_meta(dir / (base + "_errors.csv"), base, cfg,
                 {"eps", "error", "stderr"});
  }
  print_convergence(rep);
  return 0;
}

int cmd_energy(const RunConfig& cfg, const SystemSpec& s, int threads) {
  SweepOptions o = sweep_options(cfg, threads);
  EnergyReport rep = energy_boundedness(s, cfg.sweep.eps, cfg.sweep.q_order,
                                        cfg.grid.T, cfg.ensemble.n_paths, o);
  const fs::path dir(cfg.output.directory);
  if (wants_format(cfg, "json")) {
    json artifact = artifact_head("energy", cfg);
    artifact["report"] = json::parse(to_json(rep));
    write_text(dir / "energy_report.json", artifact.dump(2) + "\n");
  }
  if (wants_format(cfg, "csv")) {
    std::ostringstream os;
    write_csv(os, rep);
    write_text(dir / "energy_supmean.csv", os.str());
    if (wants_format(cfg, "json"))
      write_meta(dir / "energy_supmean.csv", "energy", cfg,
                 {"eps", "sup_mean", "stderr"});
  }
  std::cout << "energy (q_order = " << format_double(rep.q_order)
            << ", T = " << format_double(rep.T) << ", " << rep.n_paths
            << " paths)\n";
  for (std::size_t i = 0; i < rep.eps_list.size(); ++i)
    std::cout << "  eps = " << format_double(rep.eps_list[i])
              << "  sup_mean = " << format_double(rep.sup_mean[i])
              << "  stderr = " << format_double(rep.stderrs[i]) << "\n";
  std::cout << "  max/min ratio = " << format_double(rep.max_over_min) << "\n";
  return 0;
}

int cmd_validate(const RunConfig& cfg, const SystemSpec& s) {
  ValidateOptions v;
  v.t0 = cfg.validate.t0;
  v.t1 = cfg.validate.t1;
  v.q_lo = cfg.validate.q_lo;
  v.q_hi = cfg.validate.q_hi;
  v.z_lo = cfg.validate.z_lo;
  v.z_hi = cfg.validate.z_hi;
  v.eps_list = cfg.validate.eps;
  v.samples = cfg.validate.samples;
  v.seed = cfg.validate.seed;

  AssumptionReport rep = check_assumptions(s, v);
  ConfinementResult conf = confinement_check(s, v);

  if (wants_format(cfg, "json")) {
    json artifact = artifact_head("validate", cfg);
    artifact["assumptions"] = json::parse(to_json(rep));
    artifact["confinement"] = json::parse(to_json(conf));
    write_text(fs::path(cfg.output.directory) / "validate_report.json",
               artifact.dump(2) + "\n");
  }

  int failed = 0;
  std::cout << "assumption checks for " << rep.system << ":\n";
  for (const auto& c : rep.checks) {
    const bool ok = c.status == "pass";
    if (!ok) ++failed;
    std::cout << "  " << (ok ? "PASS" : "FAIL") << "  " << c.id;
    if (!c.detail.empty()) std::cout << "  (" << c.detail << ")";
    std::cout << "\n";
  }
  {
    const bool ok = conf.status == "pass";
    if (!ok) ++failed;
    std::cout << "  " << (ok ? "PASS" : "FAIL") << "  confinement";
    if (ok)
      std::cout << "  (a = " << format_double(conf.a)
                << ", b = " << format_double(conf.b) << ")";
    else if (!conf.detail.empty())
      std::cout << "  (" << conf.detail << ")";
    std::cout << "\n";
  }
  if (!rep.caveat.empty()) std::cout << "  note: " << rep.caveat << "\n";
  std::cout << (failed == 0 ? "all checks passed\n"
                            : std::to_string(failed) + " check(s) failed\n");
  return 0;
}

// threads is resolved from --threads / SMALLMASS_THREADS / config, in that
// order, but only steers execution; artifacts embed the config untouched so
// the thread environment never changes artifact bytes.
int dispatch(const std::string& command, RunConfig cfg, int threads) {
  const SystemSpec spec = make_builtin(cfg.system, cfg.params);
  fs::create_directories(cfg.output.directory);
  if (command == "simulate") return cmd_simulate(cfg, spec, threads);
  if (command == "limit-coeffs") return cmd_limit_coeffs(cfg, spec);
  if (command == "converge") return cmd_converge(cfg, spec, threads, false);
  if (command == "momentum") return cmd_converge(cfg, spec, threads, true);
  if (command == "energy") return cmd_energy(cfg, spec, threads);
  if (command == "validate") return cmd_validate(cfg, spec);
  throw Error("unreachable subcommand");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"small-mass limits of noisy Hamiltonian systems: simulation, "
               "limiting coefficients, convergence sweeps, assumption checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  int threads_flag = -1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "run configuration (.toml or .json)")
        ->required();
    sub->add_option("--output-dir", out_override,
                    "override the [output] directory");
    sub->add_option("--threads", threads_flag,
                    "worker thread cap (overrides SMALLMASS_THREADS and config)");
  };
  add_common(app.add_subcommand(
      "simulate", "integrate coupled full and limiting trajectories"));
  add_common(app.add_subcommand(
      "limit-coeffs", "evaluate limiting drift/diffusion on a q-grid"));
  add_common(app.add_subcommand(
      "converge", "strong-error convergence sweep over eps"));
  add_common(app.add_subcommand(
      "momentum", "momentum decay sweep over eps"));
  add_common(app.add_subcommand(
      "energy", "kinetic energy boundedness sweep over eps"));
  add_common(app.add_subcommand(
      "validate", "check structural assumptions on a sampled box"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg = parse_config_file(config_path);
    if (!out_override.empty()) cfg.output.directory = out_override;
    int threads = cfg.ensemble.threads;
    if (threads_flag >= 0) {
      threads = threads_flag;
    } else if (const char* env = std::getenv("SMALLMASS_THREADS")) {
      errno = 0;
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || errno == ERANGE || v < 0)
        throw ConfigError(
            "SMALLMASS_THREADS must be a non-negative integer");
      threads = (int)v;
    }
    return dispatch(app.get_subcommands().front()->get_name(), std::move(cfg),
                    threads);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const ExperimentInvalid& e) {
    std::cerr << "error: experiment-invalid: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 1;
  }
}
