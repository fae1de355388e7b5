#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include "smallmass/validate.hpp"
#include "test_util.hpp"

using namespace smallmass;
using nlohmann::json;

namespace {

ValidateOptions fast_opts() {
  ValidateOptions o;
  o.samples = 2048;
  return o;
}

}  // namespace

TEST_CASE("the sampling uniforms are deterministic and live in [0,1)",
          "[validate]") {
  for (int i = 0; i < 1000; ++i) {
    const double u = detail::uniform01(2026, i, i % 5);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(u == detail::uniform01(2026, i, i % 5));
  }
  REQUIRE(detail::uniform01(1, 0, 0) != detail::uniform01(2, 0, 0));
}

TEST_CASE("every bundled system passes its assumption audit", "[validate]") {
  const ValidateOptions o = fast_opts();
  for (const auto& d : builtin_registry()) {
    const SystemSpec s = make_builtin(d.name);
    const AssumptionReport rep = check_assumptions(s, o);
    INFO(d.name);
    for (const auto& c : rep.checks) {
      INFO(c.id << ": " << c.detail);
      REQUIRE(c.status != "fail");
    }
    REQUIRE(rep.all_pass());
    const ConfinementResult con = confinement_check(s, o);
    INFO(con.detail);
    REQUIRE(con.status == "pass");
  }
}

TEST_CASE("a degenerating drag is caught with a witness point", "[validate]") {
  SystemSpec s = make_builtin("em2d");
  s.gamma = [](double, const Vec& q) {
    Mat g = Mat::Zero(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = std::exp(-q.squaredNorm());
    return g;
  };
  s.dgamma_dq = nullptr;  // fall back to finite differences

  const AssumptionReport rep = check_assumptions(s, fast_opts());
  REQUIRE_FALSE(rep.all_pass());
  bool found = false;
  for (const auto& c : rep.checks) {
    if (c.id != "drag-floor-and-bounds") {
      REQUIRE(c.status != "fail");
      continue;
    }
    found = true;
    REQUIRE(c.status == "fail");
    REQUIRE(c.has_witness);
    REQUIRE(c.witness_q.norm() > 3.0);  // the floor degenerates far out
    REQUIRE_THAT(c.detail, Catch::Matchers::ContainsSubstring("degenerates"));
  }
  REQUIRE(found);
}

TEST_CASE("a vanishing edge polynomial coefficient is caught", "[validate]") {
  SystemSpec s = make_builtin("poly1d",
                              {{"k1", 1}, {"k2", 2}, {"d1", 1.0}, {"d2", 1.0}});
  s.kinetic = KineticEnergyModel::polynomial_radial(
      1, 2,
      std::vector<KineticEnergyModel::ScalarFn>{
          [](double) { return 1.0; },
          [](double t) { return std::max(0.0, 0.5 - t); }});

  const AssumptionReport rep = check_assumptions(s, fast_opts());
  bool found = false;
  for (const auto& c : rep.checks) {
    if (c.id != "poly-coefficient-floor") continue;
    found = true;
    REQUIRE(c.status == "fail");
    REQUIRE(c.has_witness);
    REQUIRE(c.witness_t == Catch::Approx(0.5).margin(0.011));
  }
  REQUIRE(found);
}

TEST_CASE("evaluation failures surface as a failing check, not an exception",
          "[validate]") {
  SystemSpec s = make_builtin("ou-linear");
  s.V = [](double, const Vec& q) {
    return q.norm() > 4.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  s.dV_dq = nullptr;  // finite differences walk into the NaN region

  const AssumptionReport rep = check_assumptions(s, fast_opts());
  REQUIRE(rep.checks.size() == 1);
  REQUIRE(rep.checks[0].id == "evaluation");
  REQUIRE(rep.checks[0].status == "fail");
  REQUIRE_FALSE(rep.all_pass());
}

TEST_CASE("confinement constants match the potential", "[validate]") {
  const ValidateOptions o = fast_opts();

  SystemSpec s = make_builtin("ou-linear");
  const ConfinementResult harmonic = confinement_check(s, o);
  REQUIRE(harmonic.status == "pass");
  REQUIRE(harmonic.a == 0.0);  // V >= 0 needs no offset at all
  REQUIRE(harmonic.b == 0.0);

  s.V = [](double, const Vec& q) { return -q.squaredNorm(); };
  const ConfinementResult inverted = confinement_check(s, o);
  REQUIRE(inverted.status == "pass");
  REQUIRE(inverted.b == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(inverted.a == Catch::Approx(0.0).margin(1e-12));

  s.V = [](double, const Vec& q) {
    const double r2 = q.squaredNorm();
    return -r2 * r2;
  };
  const ConfinementResult quartic = confinement_check(s, o);
  REQUIRE(quartic.status == "fail");
  REQUIRE(quartic.has_witness);
  REQUIRE(quartic.witness_q.norm() > 3.0);
  REQUIRE(quartic.witness_V < -100.0);
}

TEST_CASE("the trajectory energy diagnostic stays quiet on a tame path",
          "[validate]") {
  const SystemSpec s = make_builtin("ou-linear");
  TimeGrid g;
  g.T = 1.0;
  g.steps = 200;
  NoisePath np{3, 0, 1, g};
  State x;
  x.t = 0.0;
  x.q = Vec::Constant(1, 1.0);
  x.p = Vec::Zero(1);
  std::vector<State> traj{x};
  for (std::int64_t i = 0; i < g.steps; ++i) {
    Vec dw(1);
    dw[0] = np.dW(i, 0);
    x = step_full(s, 0.1, x, g.dt(), dw, Scheme::SemiImplicitDrag);
    traj.push_back(x);
  }
  const LyapunovDiagnostic d = lyapunov_diagnostic(s, 0.1, traj, 0.0, 1.0, 5.0);
  REQUIRE_FALSE(d.flagged);
  REQUIRE(d.U.size() == traj.size());
  for (double u : d.U) REQUIRE(u >= 0.0);
}

TEST_CASE("the energy diagnostic flags growth beyond its budget",
          "[validate]") {
  const SystemSpec s = make_builtin("ou-linear");
  std::vector<State> traj;
  for (int i = 0; i <= 20; ++i) {
    State x;
    x.t = 0.1 * i;
    x.q = Vec::Constant(1, std::exp(10.0 * x.t));
    x.p = Vec::Zero(1);
    traj.push_back(x);
  }
  const LyapunovDiagnostic d = lyapunov_diagnostic(s, 0.1, traj, 0.0, 1.0, 1.0);
  REQUIRE(d.flagged);
  REQUIRE(d.flag_index > 0);
  REQUIRE_THAT(d.detail, Catch::Matchers::ContainsSubstring("budget"));
}

TEST_CASE("the energy diagnostic flags a sign-indefinite energy",
          "[validate]") {
  SystemSpec s = make_builtin("ou-linear");
  s.V = [](double, const Vec& q) { return -2.0 * q.squaredNorm(); };
  State x;
  x.t = 0.0;
  x.q = Vec::Constant(1, 1.0);
  x.p = Vec::Zero(1);
  const LyapunovDiagnostic d =
      lyapunov_diagnostic(s, 0.1, {x}, 0.0, 0.0, 1.0);
  REQUIRE(d.flagged);
  REQUIRE_THAT(d.detail, Catch::Matchers::ContainsSubstring("negative"));
}

TEST_CASE("assumption reports are deterministic and valid JSON", "[validate]") {
  const SystemSpec s = make_builtin("manifold2d");
  const ValidateOptions o = fast_opts();
  const std::string a = to_json(check_assumptions(s, o));
  const std::string b = to_json(check_assumptions(s, o));
  REQUIRE(a == b);

  const json j = json::parse(a);
  REQUIRE(j.at("schema_version") == "1");
  REQUIRE(j.at("system") == "manifold2d");
  REQUIRE(j.at("all_pass") == true);
  REQUIRE(j.at("checks").is_array());
  REQUIRE(j.at("checks").size() >= 6);
  for (const auto& c : j.at("checks")) {
    REQUIRE(c.contains("id"));
    REQUIRE(c.contains("status"));
    REQUIRE(c.contains("detail"));
    REQUIRE(c.at("constants").is_object());
  }
}

TEST_CASE("witnesses survive the JSON round trip", "[validate]") {
  SystemSpec s = make_builtin("ou-linear");
  s.V = [](double, const Vec& q) {
    const double r2 = q.squaredNorm();
    return -r2 * r2;
  };
  const json j = json::parse(to_json(confinement_check(s, fast_opts())));
  REQUIRE(j.at("status") == "fail");
  REQUIRE(j.at("witness").at("q").is_array());
  REQUIRE(j.at("witness").at("V").get<double>() < -100.0);
}

TEST_CASE("validation rejects unusable options", "[validate]") {
  const SystemSpec s = make_builtin("ou-linear");
  ValidateOptions o;
  o.samples = 10;
  REQUIRE_THROWS_AS(check_assumptions(s, o), Error);
  REQUIRE_THROWS_AS(confinement_check(s, o), Error);
  o = ValidateOptions{};
  o.eps_list.clear();
  REQUIRE_THROWS_AS(check_assumptions(s, o), Error);
  REQUIRE_THROWS_AS(lyapunov_diagnostic(s, 0.1, {}, 0.0, 0.0, 1.0), Error);
}
