#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "smallmass/config.hpp"

using namespace smallmass;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* bench_toml = R"(# benchmark run
[system]
name = "em1d"          # electromagnetic 1d

[params]
gamma0 = 2.0
gamma1 = 1
kBT = 0.5

[grid]
T = 1.0
dt_rule = "eps/20"

[ensemble]
n_paths = 10000
master_seed = 424242
threads = 4

[sweep]
eps = [0.0625, 0.015625, 0.00390625]
p = 2.0
mode = "sup-expectation"
include_noise_drift = true

[initial]
q0 = [1.0]

[output]
directory = "out/bench"
formats = ["json", "csv"]
)";

}  // namespace

TEST_CASE("a full TOML config lands in the documented fields", "[config]") {
  const RunConfig c = parse_config_toml(bench_toml);
  REQUIRE(c.system == "em1d");
  REQUIRE(c.params.at("gamma0") == 2.0);
  REQUIRE(c.params.at("gamma1") == 1.0);
  REQUIRE(c.params.at("kBT") == 0.5);
  REQUIRE(c.grid.dt_rule == "eps/20");
  REQUIRE(c.ensemble.n_paths == 10000);
  REQUIRE(c.ensemble.master_seed == 424242u);
  REQUIRE(c.ensemble.threads == 4);
  REQUIRE(c.sweep.eps == std::vector<double>{0.0625, 0.015625, 0.00390625});
  REQUIRE(c.sweep.include_noise_drift);
  REQUIRE(c.initial.q0 == std::vector<double>{1.0});
  REQUIRE(c.output.directory == "out/bench");
  REQUIRE(c.output.formats == std::vector<std::string>{"json", "csv"});
  // untouched sections keep their defaults
  REQUIRE(c.simulate.eps == 0.1);
  REQUIRE(c.simulate.store == "both");
  REQUIRE(c.validate.samples == 4096);
}

TEST_CASE("canonical JSON round-trips losslessly", "[config]") {
  const RunConfig c = parse_config_toml(bench_toml);
  const std::string js = render_config_json(c);
  const RunConfig c2 = parse_config_json(js);
  REQUIRE(c2 == c);
  REQUIRE(render_config_json(c2) == js);

  RunConfig d;
  d.system = "ou-linear";
  REQUIRE(parse_config_json(render_config_json(d)) == d);

  RunConfig big = parse_config_toml(
      "[system]\nname = \"x\"\n[ensemble]\nmaster_seed = "
      "18446744073709551615\n");
  REQUIRE(big.ensemble.master_seed == 18446744073709551615ull);
  REQUIRE(parse_config_json(render_config_json(big)) == big);
}

TEST_CASE("step resolution prefers steps, then dt, then the dt rule",
          "[config]") {
  const RunConfig c = parse_config_toml(bench_toml);
  REQUIRE(resolve_steps(c.grid, 0.0625) == 320);  // dt = eps/20 = 1/320

  GridConfig g;
  g.T = 1.0;
  g.steps = 123;
  REQUIRE(resolve_steps(g, 0.5) == 123);

  GridConfig g2;
  g2.T = 2.0;
  g2.dt = 0.3;
  REQUIRE(resolve_steps(g2, 0.5) == 7);  // ceil(2/0.3)
}

TEST_CASE("malformed configs fail with located messages", "[config]") {
  auto toml = [](const char* s) { return [s] { parse_config_toml(s); }; };

  REQUIRE_THROWS_WITH(toml("[system]\nname = \"x\"\n[grid]\nTT = 1\n")(),
                      ContainsSubstring("unknown key 'TT'"));
  REQUIRE_THROWS_WITH(toml("[systems]\nname = \"x\"\n")(),
                      ContainsSubstring("unknown section [systems]"));
  REQUIRE_THROWS_WITH(toml("[grid]\nT = 1\n")(),
                      ContainsSubstring("[system] name is required"));
  REQUIRE_THROWS_WITH(
      toml("[system]\nname = \"x\"\n[grid]\nsteps = 10\ndt = 0.1\n")(),
      ContainsSubstring("steps or dt, not both"));
  REQUIRE_THROWS_WITH(
      toml("[system]\nname = \"x\"\n[grid]\ndt_rule = \"eps*20\"\n")(),
      ContainsSubstring("dt_rule"));
  REQUIRE_THROWS_WITH(toml("[system]\nname = \"x\"\n[sweep]\nmode = \"sup\"\n")(),
                      ContainsSubstring("must be one of"));
  REQUIRE_THROWS_WITH(toml("key = 1\n")(), ContainsSubstring("outside any"));
  REQUIRE_THROWS_WITH(toml("[a\n")(), ContainsSubstring("line 1"));
  REQUIRE_THROWS_WITH(toml("[system]\nname = \"x\"\nname = \"y\"\n")(),
                      ContainsSubstring("duplicate key 'name'"));
  REQUIRE_THROWS_WITH(toml("[system]\nname = \"x\"\n[system]\n")(),
                      ContainsSubstring("duplicate section"));
  REQUIRE_THROWS_WITH(toml("[system]\nname = \"x\"\n[params]\nbad = \"s\"\n")(),
                      ContainsSubstring("'bad' must be a number"));
  REQUIRE_THROWS_WITH(toml("[system]\nname = \"x\"\n[grid]\nT = oops\n")(),
                      ContainsSubstring("cannot parse value 'oops'"));
  REQUIRE_THROWS_WITH(toml("[system]\nname = \"x\"\n[ensemble]\nn_paths = 0\n")(),
                      ContainsSubstring("n_paths must be >= 1"));
  REQUIRE_THROWS_WITH(
      toml("[system]\nname = \"x\"\n[initial]\np0 = \"values\"\n")(),
      ContainsSubstring("needs p0_values"));
  REQUIRE_THROWS_AS(toml("[system]\nname = \"x\"\n[grid]\nT = -1\n")(),
                    ConfigError);

  REQUIRE_THROWS_WITH([] { parse_config_json("{oops"); }(),
                      ContainsSubstring("invalid JSON"));
  REQUIRE_THROWS_WITH([] { parse_config_json("[1,2]"); }(),
                      ContainsSubstring("top level must be a table"));
}

TEST_CASE("strings keep comment characters and commas", "[config]") {
  const RunConfig s = parse_config_toml(
      "[system]\nname = \"a#b\"  # real comment\n[output]\ndirectory = "
      "\"x,y\"\n");
  REQUIRE(s.system == "a#b");
  REQUIRE(s.output.directory == "x,y");
}

TEST_CASE("the file loader dispatches on the extension", "[config]") {
  const RunConfig c = parse_config_toml(bench_toml);
  {
    std::ofstream f("/tmp/cfg_roundtrip.toml");
    f << bench_toml;
  }
  REQUIRE(parse_config_file("/tmp/cfg_roundtrip.toml") == c);
  {
    std::ofstream f("/tmp/cfg_roundtrip.json");
    f << render_config_json(c);
  }
  REQUIRE(parse_config_file("/tmp/cfg_roundtrip.json") == c);

  REQUIRE_THROWS_WITH([] { parse_config_file("/tmp/cfg_missing.toml"); }(),
                      ContainsSubstring("cannot open"));
  REQUIRE_THROWS_WITH([] { parse_config_file("/tmp/cfg_other.yaml"); }(),
                      ContainsSubstring(".toml or .json"));
}

TEST_CASE("randomized configs survive the JSON round trip", "[config]") {
  std::mt19937_64 rng(20260815);
  auto real = [&](double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>()(rng);
  };
  auto count = [&](std::int64_t lo, std::int64_t hi) {
    return std::int64_t(lo + rng() % std::uint64_t(hi - lo + 1));
  };

  for (int it = 0; it < 60; ++it) {
    RunConfig c;
    c.system = it % 3 ? "em1d" : "weird \"name\"\nwith\tspecials\\#,";
    const int npar = int(rng() % 4);
    for (int i = 0; i < npar; ++i)
      c.params["par" + std::to_string(i)] = real(-8, 8);

    c.grid.T = real(0.1, 10);
    switch (rng() % 3) {
      case 0:
        c.grid.steps = count(1, 100000);
        break;
      case 1:
        c.grid.dt = real(1e-5, 0.5);
        break;
      default:
        c.grid.dt_rule = "eps/" + std::to_string(count(1, 64));
    }

    c.ensemble.n_paths = count(1, 1000000);
    c.ensemble.master_seed = rng();
    c.ensemble.threads = int(rng() % 9);
    c.integrator.scheme = rng() % 2 ? "explicit-em" : "semi-implicit-drag";
    c.integrator.agg = count(1, 16);

    const int neps = int(1 + rng() % 4);
    c.sweep.eps.clear();
    for (int i = 0; i < neps; ++i) c.sweep.eps.push_back(real(1e-4, 1.0));
    c.sweep.p = real(0.5, 4);
    c.sweep.mode = rng() % 2 ? "sup-expectation" : "expectation-sup";
    c.sweep.q_order = real(0.5, 3);
    c.sweep.include_noise_drift = rng() % 2;

    c.simulate.eps = real(1e-3, 1);
    c.simulate.layout = rng() % 2 ? "long" : "per-path";
    c.simulate.store = (rng() % 3 == 0) ? "full" : (rng() % 2 ? "limit" : "both");

    const int dim = int(1 + rng() % 3);
    c.limit_coeffs.t = real(0, 2);
    c.limit_coeffs.q_min.assign(dim, 0.0);
    c.limit_coeffs.q_max.assign(dim, 0.0);
    c.limit_coeffs.q_count.assign(dim, 1);
    for (int d = 0; d < dim; ++d) {
      c.limit_coeffs.q_min[d] = real(-4, 0);
      c.limit_coeffs.q_max[d] = real(c.limit_coeffs.q_min[d], 4);
      c.limit_coeffs.q_count[d] = count(1, 9);
    }

    c.validate.t0 = real(0, 1);
    c.validate.t1 = c.validate.t0 + real(0.1, 2);
    c.validate.q_lo = real(-6, 0);
    c.validate.q_hi = c.validate.q_lo + real(0.5, 6);
    c.validate.z_lo = real(-6, 0);
    c.validate.z_hi = c.validate.z_lo + real(0.5, 6);
    c.validate.samples = count(64, 1 << 20);
    c.validate.seed = rng();
    c.validate.eps.assign(1 + rng() % 3, 0.0);
    for (double& e : c.validate.eps) e = real(1e-4, 1);

    c.initial.q0.assign(dim, 0.0);
    for (double& v : c.initial.q0) v = real(-3, 3);
    if (rng() % 2) {
      c.initial.p0 = "values";
      c.initial.p0_values.assign(dim, 0.0);
      for (double& v : c.initial.p0_values) v = real(-3, 3);
    }

    c.output.directory = rng() % 2 ? "out/x y" : "deep/nested/dir";
    c.output.formats.clear();
    if (rng() % 2) c.output.formats.push_back("json");
    if (rng() % 2 || c.output.formats.empty())
      c.output.formats.push_back("csv");

    const std::string js = render_config_json(c);
    RunConfig back;
    try {
      back = parse_config_json(js);
    } catch (const ConfigError& e) {
      INFO(js);
      FAIL(std::string("round trip rejected: ") + e.what());
    }
    if (back != c) {
      INFO(js);
      FAIL("round trip drifted");
    }
    REQUIRE(render_config_json(back) == js);
  }
}
