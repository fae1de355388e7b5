#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "smallmass/config.hpp"

using namespace smallmass;
using Catch::Matchers::ContainsSubstring;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  f << content;
}

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path d = fs::temp_directory_path() /
                     ("smallmass_cli_" + tag + "_" +
                      std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// runs the tool with cwd set to `dir`, capturing exit code and both streams
CliRun run_cli(const fs::path& dir, const std::string& args,
               const std::string& env_prefix = "") {
  const std::string cmd = "cd '" + dir.string() + "' && " + env_prefix +
                          (env_prefix.empty() ? "" : " ") + "'" +
                          SMALLMASS_CLI_PATH + "' " + args +
                          " > stdout.txt 2> stderr.txt";
  const int rc = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

const char* mini_converge = R"([system]
name = "ou-linear"

[grid]
T = 0.5

[ensemble]
n_paths = 200
master_seed = 99

[sweep]
eps = [0.2, 0.1, 0.05]
p = 2.0

[output]
directory = "out"
formats = ["json", "csv"]
)";

}  // namespace

TEST_CASE("converge produces artifacts, a slope, and a clean exit", "[cli]") {
  const fs::path dir = fresh_dir("converge");
  write_file(dir / "cfg.toml", mini_converge);
  const CliRun r = run_cli(dir, "converge cfg.toml");
  INFO(r.err);
  REQUIRE(r.code == 0);
  REQUIRE_THAT(r.out, ContainsSubstring("slope = "));
  REQUIRE(fs::exists(dir / "out" / "converge_report.json"));
  REQUIRE(fs::exists(dir / "out" / "converge_errors.csv"));
  REQUIRE(fs::exists(dir / "out" / "converge_errors.meta.json"));

  const json art = json::parse(slurp(dir / "out" / "converge_report.json"));
  REQUIRE(art.at("schema_version") == "1");
  REQUIRE(art.at("command") == "converge");
  const json rep = art.at("report");
  const double slope = rep.at("slope").get<double>();
  REQUIRE(slope > 0.6);
  REQUIRE(slope < 1.05);
  REQUIRE(rep.at("errors").size() == 3);
  REQUIRE(rep.at("errors")[0].get<double>() > rep.at("errors")[2].get<double>());
  for (const auto& a : rep.at("aborted_fractions"))
    REQUIRE(a.get<double>() == 0.0);

  // the embedded config is the parsed input, verbatim
  const RunConfig from_file = parse_config_file((dir / "cfg.toml").string());
  const RunConfig embedded = parse_config_json(art.at("config").dump());
  REQUIRE(embedded == from_file);

  const std::string csv = slurp(dir / "out" / "converge_errors.csv");
  REQUIRE_THAT(csv, Catch::Matchers::StartsWith("eps,error,stderr\n"));
}

TEST_CASE("reruns are byte-identical", "[cli]") {
  const fs::path a = fresh_dir("rerun_a");
  const fs::path b = fresh_dir("rerun_b");
  write_file(a / "cfg.toml", mini_converge);
  write_file(b / "cfg.toml", mini_converge);
  REQUIRE(run_cli(a, "converge cfg.toml").code == 0);
  REQUIRE(run_cli(b, "converge cfg.toml").code == 0);
  REQUIRE(slurp(a / "out" / "converge_report.json") ==
          slurp(b / "out" / "converge_report.json"));
  REQUIRE(slurp(a / "out" / "converge_errors.csv") ==
          slurp(b / "out" / "converge_errors.csv"));
}

TEST_CASE("thread count never leaks into artifact bytes", "[cli]") {
  const fs::path one = fresh_dir("thr1");
  const fs::path many = fresh_dir("thr3");
  const fs::path env = fresh_dir("threnv");
  for (const auto& d : {one, many, env}) write_file(d / "cfg.toml", mini_converge);
  REQUIRE(run_cli(one, "converge cfg.toml --threads 1").code == 0);
  REQUIRE(run_cli(many, "converge cfg.toml --threads 3").code == 0);
  REQUIRE(run_cli(env, "converge cfg.toml", "SMALLMASS_THREADS=2").code == 0);
  const std::string ref = slurp(one / "out" / "converge_report.json");
  REQUIRE(slurp(many / "out" / "converge_report.json") == ref);
  REQUIRE(slurp(env / "out" / "converge_report.json") == ref);
}

TEST_CASE("simulate writes the documented trajectory files and nothing else",
          "[cli]") {
  const fs::path dir = fresh_dir("simulate");
  write_file(dir / "cfg.toml", R"([system]
name = "ou-linear"

[grid]
T = 0.25
steps = 50

[ensemble]
n_paths = 3
master_seed = 7

[simulate]
eps = 0.05

[output]
directory = "sim_out"
formats = ["json", "csv"]
)");
  const CliRun r = run_cli(dir, "simulate cfg.toml");
  INFO(r.err);
  REQUIRE(r.code == 0);

  const json run = json::parse(slurp(dir / "sim_out" / "simulate_run.json"));
  REQUIRE(run.at("eps") == 0.05);
  REQUIRE(run.at("steps") == 50);
  REQUIRE(run.at("files") ==
          json::array({"trajectories_full.csv", "trajectories_limit.csv"}));

  std::istringstream full(slurp(dir / "sim_out" / "trajectories_full.csv"));
  std::string line;
  std::getline(full, line);
  REQUIRE(line == "path_index,t,q_1,p_1");
  int rows = 0;
  while (std::getline(full, line)) ++rows;
  REQUIRE(rows == 3 * 51);  // n_paths * (steps + 1)

  std::istringstream limit(slurp(dir / "sim_out" / "trajectories_limit.csv"));
  std::getline(limit, line);
  REQUIRE(line == "path_index,t,q_1");

  // everything the run created lives in the output directory
  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(dir))
    top.insert(e.path().filename().string());
  REQUIRE(top ==
          std::set<std::string>{"cfg.toml", "sim_out", "stdout.txt",
                                "stderr.txt"});
}

TEST_CASE("the magnetic 2d bench has exactly zero noise-induced drift",
          "[cli]") {
  const fs::path dir = fresh_dir("limitcoeffs");
  write_file(dir / "cfg.toml", R"([system]
name = "em2d"

[limit_coeffs]
t = 0.0
q_min = [-1.0, -1.0]
q_max = [1.0, 1.0]
q_count = [3, 3]

[output]
directory = "lc_out"
formats = ["json"]
)");
  const CliRun r = run_cli(dir, "limit-coeffs cfg.toml");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json art = json::parse(slurp(dir / "lc_out" / "limit_coeffs.json"));
  const json pts = art.at("points");
  REQUIRE(pts.size() == 9);
  for (const auto& pt : pts) {
    REQUIRE(pt.at("S")[0].get<double>() == 0.0);
    REQUIRE(pt.at("S")[1].get<double>() == 0.0);
    REQUIRE(pt.at("gamma_tilde") ==
            json::array({json::array({2.0, -1.0}), json::array({1.0, 2.0})}));
  }
}

TEST_CASE("validate prints a pass table and always exits zero", "[cli]") {
  const fs::path dir = fresh_dir("validate");
  write_file(dir / "cfg.toml", R"([system]
name = "ou-linear"

[validate]
samples = 512

[output]
directory = "val_out"
formats = ["json"]
)");
  const CliRun r = run_cli(dir, "validate cfg.toml");
  INFO(r.err);
  REQUIRE(r.code == 0);
  REQUIRE_THAT(r.out, ContainsSubstring("all checks passed"));
  REQUIRE_THAT(r.out, ContainsSubstring("drag-floor-and-bounds"));
  const json art = json::parse(slurp(dir / "val_out" / "validate_report.json"));
  REQUIRE(art.at("assumptions").at("all_pass") == true);
  REQUIRE(art.at("confinement").at("status") == "pass");
}

TEST_CASE("--output-dir overrides the configured directory", "[cli]") {
  const fs::path dir = fresh_dir("outdir");
  write_file(dir / "cfg.toml", mini_converge);
  const CliRun r = run_cli(dir, "converge cfg.toml --output-dir elsewhere");
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(dir / "elsewhere" / "converge_report.json"));
  REQUIRE_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("failure modes map to documented exit codes", "[cli]") {
  const fs::path dir = fresh_dir("exitcodes");

  CliRun r = run_cli(dir, "converge no_such_file.toml");
  REQUIRE(r.code == 2);
  REQUIRE_THAT(r.err, ContainsSubstring("error: config:"));
  REQUIRE_THAT(r.err, ContainsSubstring("cannot open"));

  write_file(dir / "bad_system.toml", "[system]\nname = \"nope\"\n");
  r = run_cli(dir, "validate bad_system.toml");
  REQUIRE(r.code == 2);
  REQUIRE_THAT(r.err, ContainsSubstring("unknown system 'nope'"));
  REQUIRE_THAT(r.err, ContainsSubstring("known systems"));

  write_file(dir / "cfg.toml", mini_converge);
  r = run_cli(dir, "converge cfg.toml", "SMALLMASS_THREADS=zap");
  REQUIRE(r.code == 2);
  REQUIRE_THAT(r.err, ContainsSubstring("SMALLMASS_THREADS"));

  write_file(dir / "blow.toml", R"([system]
name = "em1d"

[grid]
T = 1.0
dt_rule = "eps/0.5"

[ensemble]
n_paths = 40
master_seed = 5

[sweep]
eps = [0.001]

[output]
directory = "blow_out"
formats = ["json"]
)");
  r = run_cli(dir, "converge blow.toml");
  REQUIRE(r.code == 3);
  REQUIRE_THAT(r.err, ContainsSubstring("error: experiment-invalid:"));
  REQUIRE_THAT(r.err, ContainsSubstring("aborted fraction"));

  r = run_cli(dir, "");
  REQUIRE(r.code == 2);

  r = run_cli(dir, "--help");
  REQUIRE(r.code == 0);
  REQUIRE_THAT(r.out, ContainsSubstring("converge"));
  REQUIRE_THAT(r.out, ContainsSubstring("limit-coeffs"));
}
