#pragma once

// Hypothesis checking on sampled boxes. The limiting equation rests on:
// bounded growth of time/position derivatives of K relative to K itself,
// gradient coercivity, sublinear z-derivatives, a uniform drag floor,
// polynomial coercivity of K in z, p-independent drag, two-sided spectral
// bounds on A, q-independence of K~, and a confining relation between V and
// |q|^2. A sampled box cannot prove any of these globally; a pass certifies
// the inequality on the sampled set and reports fitted constants, while a
// fail carries a concrete witness point.
//
// In the rescaled momentum variable z = (p - psi)/sqrt(eps) the kinetic
// energy is K(eps,t,q,z) = K~(eps,t, z^T A(t,q) z), so
//   d_z K    = 2 K~' A z
//   d^2_z K  = 2 K~' A + 4 K~'' (Az)(Az)^T
//   d_t K    = K~_t + K~' z^T (d_t A) z
//   d_{q^i}K = K~' z^T (d_{q^i} A) z

#include <algorithm>

#include "smallmass/sde.hpp"

namespace smallmass {

struct AssumptionCheck {
  std::string id;
  std::string status;  // "pass", "fail", "unchecked"
  std::string detail;
  std::map<std::string, double> constants;
  bool has_witness = false;
  double witness_t = 0.0;
  double witness_eps = 0.0;
  Vec witness_q, witness_z;
};

struct AssumptionReport {
  std::string system;
  std::vector<AssumptionCheck> checks;
  std::string caveat;
  bool all_pass() const {
    for (const auto& c : checks)
      if (c.status == "fail") return false;
    return true;
  }
};

struct ValidateOptions {
  double t0 = 0.0, t1 = 1.0;
  double q_lo = -5.0, q_hi = 5.0;
  double z_lo = -5.0, z_hi = 5.0;
  std::vector<double> eps_list{1.0, 0.1, 0.01};
  std::int64_t samples = 4096;
  std::uint64_t seed = 2026;
};

namespace detail {

// Deterministic uniform in [0,1), one Philox word per draw.
inline double uniform01(std::uint64_t seed, std::int64_t idx, int dim) {
  const auto r =
      philox4x32({std::uint32_t(std::uint64_t(idx)),
                  std::uint32_t(std::uint64_t(idx) >> 32), std::uint32_t(dim),
                  0x76616c69u},
                 {std::uint32_t(seed), std::uint32_t(seed >> 32)});
  return double(r[0]) * 0x1p-32;
}

struct SamplePoint {
  double t = 0.0, eps = 1.0;
  Vec q, z;
};

inline SamplePoint draw_sample(const ValidateOptions& o, int n, std::int64_t i) {
  SamplePoint s;
  s.t = o.t0 + (o.t1 - o.t0) * uniform01(o.seed, i, 0);
  s.q.resize(n);
  s.z.resize(n);
  for (int d = 0; d < n; ++d) {
    s.q[d] = o.q_lo + (o.q_hi - o.q_lo) * uniform01(o.seed, i, 1 + d);
    s.z[d] = o.z_lo + (o.z_hi - o.z_lo) * uniform01(o.seed, i, 1 + n + d);
  }
  s.eps = o.eps_list[std::size_t(i % (std::int64_t)o.eps_list.size())];
  return s;
}

struct WitnessTracker {
  double value = 0.0;
  bool set = false;
  SamplePoint at;
  void track_min(double v, const SamplePoint& s) {
    if (!set || v < value) {
      value = v;
      at = s;
      set = true;
    }
  }
  void track_max(double v, const SamplePoint& s) {
    if (!set || v > value) {
      value = v;
      at = s;
      set = true;
    }
  }
};

inline void attach_witness(AssumptionCheck& c, const SamplePoint& w) {
  c.has_witness = true;
  c.witness_t = w.t;
  c.witness_eps = w.eps;
  c.witness_q = w.q;
  c.witness_z = w.z;
}

inline std::string point_string(const SamplePoint& s) {
  std::string out =
      "t=" + format_double(s.t) + ", eps=" + format_double(s.eps) + ", q=(";
  for (Eigen::Index i = 0; i < s.q.size(); ++i)
    out += (i ? "," : "") + format_double(s.q[i]);
  out += "), z=(";
  for (Eigen::Index i = 0; i < s.z.size(); ++i)
    out += (i ? "," : "") + format_double(s.z[i]);
  return out + ")";
}

inline double sym_floor_or(const Mat& M, bool& symmetric) {
  try {
    return spd_floor(M);
  } catch (const SymmetryError&) {
    symmetric = false;
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

inline AssumptionReport check_assumptions(const SystemSpec& s,
                                          const ValidateOptions& opts = {}) {
  check_spec(s);
  require(opts.samples >= 64, "validate: need at least 64 samples");
  require(!opts.eps_list.empty(), "validate: eps list must not be empty");

  AssumptionReport rep;
  rep.system = s.name.empty() ? "(api)" : s.name;
  rep.caveat =
      "sampled-box certificate over " + std::to_string(opts.samples) +
      " points; a pass certifies the inequality on the sampled set only";

  const int n = s.n;
  const std::int64_t N = opts.samples;

  std::vector<detail::SamplePoint> pts(N);
  std::vector<double> K(N), r_growth(N), gznorm(N), hnorm(N), znorm(N);
  double gamma_floor = std::numeric_limits<double>::infinity();
  detail::SamplePoint gamma_floor_at;
  bool gamma_symmetric = true;
  double A_floor = std::numeric_limits<double>::infinity(), A_ceil = 0.0;
  detail::SamplePoint A_floor_at;
  bool A_symmetric = true;
  double sup_gamma = 0.0, sup_F = 0.0, sup_sigma = 0.0, sup_dpsi_dt = 0.0,
         sup_dV = 0.0, sup_dpsi_dq = 0.0, sup_d2psi = 0.0, sup_dgamma = 0.0,
         sup_dA_dq = 0.0, sup_dA_dt = 0.0;

  try {
    for (std::int64_t i = 0; i < N; ++i) {
      detail::SamplePoint sp = detail::draw_sample(opts, n, i);
      pts[i] = sp;
      const Mat A = eval_A(s, sp.t, sp.q);
      const Mat gam = eval_gamma(s, sp.t, sp.q);
      const double zeta = sp.z.dot(A * sp.z);
      const double Kv = s.kinetic.value(sp.eps, sp.t, zeta);
      const double kz = s.kinetic.dzeta(sp.eps, sp.t, zeta);
      const double kzz = s.kinetic.d2zeta(sp.eps, sp.t, zeta);
      const double kt = s.kinetic.dt(sp.eps, sp.t, zeta);
      ensure_finite(Kv, "kinetic");
      ensure_finite(kz, "kinetic dzeta");
      ensure_finite(kzz, "kinetic d2zeta");
      ensure_finite(kt, "kinetic dt");

      const Vec Az = A * sp.z;
      K[i] = Kv;
      znorm[i] = sp.z.norm();
      gznorm[i] = 2.0 * std::abs(kz) * Az.norm();
      hnorm[i] = (2.0 * kz * A + 4.0 * kzz * Az * Az.transpose()).norm();

      const Mat dAt = dA_dt_eval(s, sp.t, sp.q);
      const double dtK = kt + kz * sp.z.dot(dAt * sp.z);
      double dqK2 = 0.0;
      for (int d = 0; d < n; ++d) {
        const Mat dAd = dA_dq_eval(s, sp.t, sp.q, d);
        const double gi = kz * sp.z.dot(dAd * sp.z);
        dqK2 += gi * gi;
        sup_dA_dq = std::max(sup_dA_dq, dAd.norm());
      }
      r_growth[i] = std::max(std::abs(dtK), std::sqrt(dqK2));
      sup_dA_dt = std::max(sup_dA_dt, dAt.norm());

      const double gfloor = detail::sym_floor_or(gam, gamma_symmetric);
      if (gamma_symmetric && gfloor < gamma_floor) {
        gamma_floor = gfloor;
        gamma_floor_at = sp;
      }
      const double afloor = detail::sym_floor_or(A, A_symmetric);
      if (A_symmetric) {
        if (afloor < A_floor) {
          A_floor = afloor;
          A_floor_at = sp;
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()),
                                              Eigen::EigenvaluesOnly);
        A_ceil = std::max(A_ceil, es.eigenvalues().maxCoeff());
      }

      const Vec psi = eval_psi(s, sp.t, sp.q);
      const Vec p = psi + std::sqrt(sp.eps) * sp.z;
      sup_gamma = std::max(sup_gamma, gam.norm());
      sup_F = std::max(sup_F, eval_F(s, sp.t, sp.q, p).norm());
      sup_sigma = std::max(sup_sigma, eval_sigma(s, sp.t, sp.q, p).norm());
      sup_dpsi_dt = std::max(sup_dpsi_dt, dpsi_dt_eval(s, sp.t, sp.q).norm());
      sup_dV = std::max(sup_dV, dV_dq_eval(s, sp.t, sp.q).norm());
      sup_dpsi_dq = std::max(sup_dpsi_dq, dpsi_dq_eval(s, sp.t, sp.q).norm());
      for (int d = 0; d < n; ++d) {
        sup_d2psi = std::max(sup_d2psi, d2psi_dq2_eval(s, sp.t, sp.q, d).norm());
        sup_dgamma =
            std::max(sup_dgamma, dgamma_dq_eval(s, sp.t, sp.q, d).norm());
      }
    }
  } catch (const EvaluationError& e) {
    AssumptionCheck c;
    c.id = "evaluation";
    c.status = "fail";
    c.detail = std::string("coefficient evaluation failed while sampling: ") +
               e.what();
    rep.checks.push_back(c);
    return rep;
  }

  // growth: max(|d_t K|, |d_q K|) <= M + C K
  {
    AssumptionCheck c;
    c.id = "K-growth";
    double C = 0.0;
    for (std::int64_t i = 0; i < N; ++i)
      if (K[i] >= 1.0) C = std::max(C, r_growth[i] / K[i]);
    double M = 0.0;
    for (std::int64_t i = 0; i < N; ++i)
      M = std::max(M, r_growth[i] - C * K[i]);
    c.constants["M"] = M;
    c.constants["C"] = C;
    c.status = "pass";
    c.detail = "fitted max(|dK/dt|, |grad_q K|) <= M + C K on the sampled box";
    rep.checks.push_back(c);
  }

  // gradient coercivity: |grad_z K|^2 + M >= c K
  {
    AssumptionCheck c;
    c.id = "K-gradient-coercivity";
    double cmin = std::numeric_limits<double>::infinity();
    detail::WitnessTracker w;
    for (std::int64_t i = 0; i < N; ++i) {
      const double ratio =
          (gznorm[i] * gznorm[i] + 1.0) / std::max(K[i], 1e-300);
      if (ratio < cmin) cmin = ratio;
      w.track_min(ratio, pts[i]);
    }
    c.constants["c"] = cmin;
    c.constants["M"] = 1.0;
    if (cmin > 1e-8) {
      c.status = "pass";
      c.detail = "fitted |grad_z K|^2 + 1 >= c K with c = " + format_double(cmin);
    } else {
      c.status = "fail";
      c.detail = "gradient coercivity degenerates, c = " + format_double(cmin) +
                 " at " + detail::point_string(w.at);
      detail::attach_witness(c, w.at);
    }
    rep.checks.push_back(c);
  }

  // sublinear z-derivatives: for each delta a finite M(delta) with
  // max(|grad_z K|, |hess_z K|) <= M + delta K
  {
    AssumptionCheck c;
    c.id = "K-derivative-sublinear";
    for (double delta : {0.1, 0.01}) {
      double M = 0.0;
      for (std::int64_t i = 0; i < N; ++i)
        M = std::max(M, std::max(gznorm[i], hnorm[i]) - delta * K[i]);
      c.constants["M_delta_" + format_double(delta)] = M;
    }
    c.status = "pass";
    c.detail = "fitted M(delta) for delta in {0.1, 0.01} on the sampled box";
    rep.checks.push_back(c);
  }

  // drag floor: gamma symmetric with eigenvalues >= lambda > 0, and the
  // remaining boundedness constants of the coefficient set
  {
    AssumptionCheck c;
    c.id = "drag-floor-and-bounds";
    if (!gamma_symmetric) {
      c.status = "fail";
      c.detail = "drag matrix is not symmetric on the sampled box";
    } else {
      c.constants["lambda"] = gamma_floor;
      c.constants["sup_norm_gamma"] = sup_gamma;
      c.constants["sup_norm_F"] = sup_F;
      c.constants["sup_norm_sigma"] = sup_sigma;
      c.constants["sup_norm_dpsi_dt"] = sup_dpsi_dt;
      c.constants["sup_norm_grad_V"] = sup_dV;
      if (gamma_floor > 1e-6) {
        c.status = "pass";
        c.detail = "drag eigenvalue floor " + format_double(gamma_floor);
      } else {
        c.status = "fail";
        c.detail = "drag eigenvalue floor " + format_double(gamma_floor) +
                   " at " + detail::point_string(gamma_floor_at) +
                   " (threshold 1e-6); the effective drag degenerates";
        detail::attach_witness(c, gamma_floor_at);
      }
    }
    rep.checks.push_back(c);
  }

  // polynomial coercivity: K >= c |z|^{2 eta} for large |z|
  {
    AssumptionCheck c;
    c.id = "K-coercivity";
    detail::WitnessTracker wneg;
    for (std::int64_t i = 0; i < N; ++i)
      if (K[i] <= 0.0 && znorm[i] > 0.0) wneg.track_min(K[i], pts[i]);
    if (wneg.set) {
      c.status = "fail";
      c.detail = "kinetic energy is not positive at nonzero z: K = " +
                 format_double(wneg.value) + " at " +
                 detail::point_string(wneg.at);
      detail::attach_witness(c, wneg.at);
    } else {
      std::vector<std::int64_t> idx(N);
      for (std::int64_t i = 0; i < N; ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        return znorm[a] < znorm[b];
      });
      const std::int64_t lo = (9 * N) / 10;
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      std::int64_t m = 0;
      for (std::int64_t j = lo; j < N; ++j) {
        const std::int64_t i = idx[j];
        if (K[i] <= 0.0 || znorm[i] <= 0.0) continue;
        const double lx = std::log(znorm[i]), ly = std::log(K[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
      }
      const double denom = m * sxx - sx * sx;
      const double eta =
          (m >= 8 && denom > 0.0) ? 0.5 * (m * sxy - sx * sy) / denom : 0.0;
      double cmin = std::numeric_limits<double>::infinity();
      detail::WitnessTracker w;
      for (std::int64_t j = lo; j < N; ++j) {
        const std::int64_t i = idx[j];
        const double ratio = K[i] / std::pow(znorm[i], 2.0 * eta);
        if (ratio < cmin) cmin = ratio;
        w.track_min(ratio, pts[i]);
      }
      c.constants["eta"] = eta;
      c.constants["c"] = cmin;
      if (eta > 0.05 && cmin > 1e-12) {
        c.status = "pass";
        c.detail = "top-decile fit K >= c |z|^{2 eta}, eta = " +
                   format_double(eta) + ", c = " + format_double(cmin);
      } else {
        c.status = "fail";
        c.detail = "kinetic energy does not grow with |z| on the top decile "
                   "(eta = " + format_double(eta) + ", c = " +
                   format_double(cmin) + "), witness at " +
                   detail::point_string(w.at);
        detail::attach_witness(c, w.at);
      }
    }
    rep.checks.push_back(c);
  }

  // drag p-independence is structural; report sampled smoothness constants
  {
    AssumptionCheck c;
    c.id = "drag-p-independent";
    c.status = "pass";
    c.detail = "drag callable takes (t,q) only; sampled q-derivative finite";
    c.constants["sup_norm_dgamma_dq"] = sup_dgamma;
    rep.checks.push_back(c);
  }

  // metric bounds: A symmetric with eigenvalues in [c, C]
  {
    AssumptionCheck c;
    c.id = "metric-bounds";
    if (!A_symmetric) {
      c.status = "fail";
      c.detail = "metric A is not symmetric on the sampled box";
    } else {
      c.constants["c"] = A_floor;
      c.constants["C"] = A_ceil;
      if (A_floor > 1e-8) {
        c.status = "pass";
        c.detail = "metric eigenvalues in [" + format_double(A_floor) + ", " +
                   format_double(A_ceil) + "] on the sampled box";
      } else {
        c.status = "fail";
        c.detail = "metric eigenvalue floor " + format_double(A_floor) +
                   " at " + detail::point_string(A_floor_at);
        detail::attach_witness(c, A_floor_at);
      }
    }
    rep.checks.push_back(c);
  }

  // q-independence of K~ holds by construction of the kinetic model types
  {
    AssumptionCheck c;
    c.id = "kinetic-q-free";
    c.status = "pass";
    c.detail = "kinetic models are functions of (eps,t,zeta) only; all "
               "q-dependence enters through zeta = z^T A(t,q) z";
    rep.checks.push_back(c);
  }

  // remaining derivative bounds used by the drift assembly
  {
    AssumptionCheck c;
    c.id = "coefficient-derivative-bounds";
    c.status = "pass";
    c.detail = "sampled sup norms of the coefficient derivatives";
    c.constants["sup_norm_dpsi_dq"] = sup_dpsi_dq;
    c.constants["sup_norm_d2psi_dq2"] = sup_d2psi;
    c.constants["sup_norm_dgamma_dq"] = sup_dgamma;
    c.constants["sup_norm_dA_dq"] = sup_dA_dq;
    c.constants["sup_norm_dA_dt"] = sup_dA_dt;
    rep.checks.push_back(c);
  }

  // polynomial models: the lowest and highest coefficient callables must
  // stay bounded away from zero in time
  if (s.kinetic.kind() == KineticKind::PolynomialRadial) {
    AssumptionCheck c;
    c.id = "poly-coefficient-floor";
    const int k1 = s.kinetic.poly_k1(), k2 = s.kinetic.poly_k2();
    double f1 = std::numeric_limits<double>::infinity();
    double f2 = std::numeric_limits<double>::infinity();
    double t_at = opts.t0;
    for (int j = 0; j <= 100; ++j) {
      const double t = opts.t0 + (opts.t1 - opts.t0) * j / 100.0;
      const double d1 = s.kinetic.poly_coeff(k1, t);
      const double d2 = s.kinetic.poly_coeff(k2, t);
      if (std::min(d1, d2) < std::min(f1, f2)) t_at = t;
      f1 = std::min(f1, d1);
      f2 = std::min(f2, d2);
    }
    c.constants["d_k1_floor"] = f1;
    c.constants["d_k2_floor"] = f2;
    if (f1 > 1e-10 && f2 > 1e-10) {
      c.status = "pass";
      c.detail = "edge polynomial coefficients bounded below on the time grid";
    } else {
      c.status = "fail";
      c.detail = "edge polynomial coefficient vanishes (d_" +
                 std::to_string(f1 <= 1e-10 ? k1 : k2) + " floor " +
                 format_double(std::min(f1, f2)) + " at t = " +
                 format_double(t_at) + "); the degree range is not honest";
      c.has_witness = true;
      c.witness_t = t_at;
    }
    rep.checks.push_back(c);
  }

  return rep;
}

// --- confinement -------------------------------------------------------

struct ConfinementResult {
  std::string status;  // "pass" or "fail"
  double a = 0.0, b = 0.0;
  std::string detail;
  bool has_witness = false;
  double witness_t = 0.0;
  Vec witness_q;
  double witness_V = 0.0;
};

// Fits the smallest constants a, b >= 0 with a + b|q|^2 + V(t,q) >= 0 on the
// sampled box, and compares the boundary shell against the interior to catch
// potentials that fall faster than -|q|^2 (for which no such pair exists).
inline ConfinementResult confinement_check(const SystemSpec& s,
                                           const ValidateOptions& opts = {}) {
  check_spec(s);
  require(opts.samples >= 64, "validate: need at least 64 samples");
  const int n = s.n;
  const std::int64_t N = opts.samples;

  std::vector<double> g(N), r2(N), ts(N);
  std::vector<Vec> qs(N);
  for (std::int64_t i = 0; i < N; ++i) {
    const double t = opts.t0 + (opts.t1 - opts.t0) * detail::uniform01(opts.seed, i, 0);
    Vec q(n);
    for (int d = 0; d < n; ++d)
      q[d] = opts.q_lo + (opts.q_hi - opts.q_lo) *
                             detail::uniform01(opts.seed, i, 1 + d);
    g[i] = -eval_V(s, t, q);  // required offset at this point
    r2[i] = q.squaredNorm();
    ts[i] = t;
    qs[i] = q;
  }

  std::vector<std::int64_t> idx(N);
  for (std::int64_t i = 0; i < N; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::int64_t a, std::int64_t b) { return r2[a] < r2[b]; });

  auto shell_max = [&](std::int64_t lo, std::int64_t hi, std::int64_t& arg) {
    double m = -std::numeric_limits<double>::infinity();
    arg = idx[lo];
    for (std::int64_t j = lo; j < hi; ++j) {
      const std::int64_t i = idx[j];
      const double v = g[i] / (1.0 + r2[i]);
      if (v > m) {
        m = v;
        arg = i;
      }
    }
    return m;
  };

  std::int64_t arg_far = 0, arg_mid = 0;
  const double s_far = shell_max((9 * N) / 10, N, arg_far);
  const double s_mid = shell_max((45 * N) / 100, (55 * N) / 100, arg_mid);

  ConfinementResult res;
  if (s_far > 1.5 * std::max(s_mid, 0.0) + 0.1) {
    res.status = "fail";
    res.detail =
        "potential falls faster than -|q|^2 toward the box boundary "
        "(boundary shell max (-V)/(1+|q|^2) = " + format_double(s_far) +
        " vs interior " + format_double(s_mid) +
        "); no a + b|q|^2 + V >= 0 certificate exists";
    res.has_witness = true;
    res.witness_t = ts[arg_far];
    res.witness_q = qs[arg_far];
    res.witness_V = -g[arg_far];
    return res;
  }

  const double r2_med = r2[idx[N / 2]];
  double b = 0.0;
  for (std::int64_t i = 0; i < N; ++i)
    if (r2[i] >= r2_med && r2[i] > 0.0) b = std::max(b, g[i] / r2[i]);
  double a = 0.0;
  for (std::int64_t i = 0; i < N; ++i) a = std::max(a, g[i] - b * r2[i]);

  res.status = "pass";
  res.a = a;
  res.b = b;
  res.detail = "fitted a = " + format_double(a) + ", b = " + format_double(b) +
               " with a + b|q|^2 + V >= 0 on the sampled box";
  return res;
}

// --- trajectory energy diagnostic ---------------------------------------

struct LyapunovDiagnostic {
  std::vector<double> times, U;
  bool flagged = false;
  std::int64_t flag_index = -1;
  std::string detail;
};

// Evaluates U = a + (1+b)|q|^2 + H^eps along a trajectory and flags growth
// beyond exp(budget * elapsed) from the initial level (with a 10x allowance),
// the numerical signature of a trajectory escaping the well-posed regime.
inline LyapunovDiagnostic lyapunov_diagnostic(const SystemSpec& s, double eps,
                                              const std::vector<State>& traj,
                                              double a, double b,
                                              double growth_budget) {
  check_spec(s);
  require(!traj.empty(), "lyapunov_diagnostic: empty trajectory");
  require(a >= 0.0 && b >= 0.0, "lyapunov_diagnostic: need a, b >= 0");

  LyapunovDiagnostic d;
  d.times.reserve(traj.size());
  d.U.reserve(traj.size());
  for (const State& x : traj) {
    double U;
    try {
      U = a + (1.0 + b) * x.q.squaredNorm() + eval_hamiltonian(s, eps, x);
    } catch (const EvaluationError&) {
      U = std::numeric_limits<double>::infinity();
    }
    d.times.push_back(x.t);
    d.U.push_back(U);
    if (!std::isfinite(U)) break;  // overflow is itself the diagnostic
  }
  const double U0 = std::max(d.U[0], 1e-12);
  for (std::size_t j = 0; j < d.U.size(); ++j) {
    if (d.U[j] < 0.0) {
      d.flagged = true;
      d.flag_index = (std::int64_t)j;
      d.detail = "U went negative at t = " + format_double(d.times[j]) +
                 "; the supplied (a,b) do not confine V along this trajectory";
      return d;
    }
    const double budget_level =
        10.0 * U0 * std::exp(growth_budget * (d.times[j] - d.times[0]));
    if (d.U[j] > budget_level) {
      d.flagged = true;
      d.flag_index = (std::int64_t)j;
      d.detail = "U exceeded its exponential budget at t = " +
                 format_double(d.times[j]) + " (U = " + format_double(d.U[j]) +
                 ", budget " + format_double(budget_level) + ")";
      return d;
    }
  }
  d.detail = "energy stayed within its exponential budget";
  return d;
}

// --- serialization -------------------------------------------------------

inline std::string to_json(const AssumptionReport& r) {
  std::ostringstream os;
  os << "{\n  \"schema_version\": \"1\",\n";
  os << "  \"system\": \"" << json_escape(r.system) << "\",\n";
  os << "  \"caveat\": \"" << json_escape(r.caveat) << "\",\n";
  os << "  \"all_pass\": " << (r.all_pass() ? "true" : "false") << ",\n";
  os << "  \"checks\": [";
  for (std::size_t i = 0; i < r.checks.size(); ++i) {
    const auto& c = r.checks[i];
    os << (i ? ",\n" : "\n");
    os << "    {\"id\": \"" << json_escape(c.id) << "\", \"status\": \"" << json_escape(c.status)
       << "\", \"detail\": \"" << json_escape(c.detail) << "\", \"constants\": {";
    bool first = true;
    for (const auto& [k, v] : c.constants) {
      os << (first ? "" : ", ") << "\"" << json_escape(k) << "\": " << json_number(v);
      first = false;
    }
    os << "}";
    if (c.has_witness) {
      os << ", \"witness\": {\"t\": " << json_number(c.witness_t)
         << ", \"eps\": " << json_number(c.witness_eps) << ", \"q\": ";
      os << "[";
      for (Eigen::Index j = 0; j < c.witness_q.size(); ++j)
        os << (j ? ", " : "") << json_number(c.witness_q[j]);
      os << "], \"z\": [";
      for (Eigen::Index j = 0; j < c.witness_z.size(); ++j)
        os << (j ? ", " : "") << json_number(c.witness_z[j]);
      os << "]}";
    }
    os << "}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

inline std::string to_json(const ConfinementResult& r) {
  std::ostringstream os;
  os << "{\n  \"schema_version\": \"1\",\n";
  os << "  \"status\": \"" << json_escape(r.status) << "\",\n";
  os << "  \"a\": " << json_number(r.a) << ",\n";
  os << "  \"b\": " << json_number(r.b) << ",\n";
  os << "  \"detail\": \"" << json_escape(r.detail) << "\"";
  if (r.has_witness) {
    os << ",\n  \"witness\": {\"t\": " << json_number(r.witness_t)
       << ", \"V\": " << json_number(r.witness_V) << ", \"q\": [";
    for (Eigen::Index j = 0; j < r.witness_q.size(); ++j)
      os << (j ? ", " : "") << json_number(r.witness_q[j]);
    os << "]}";
  }
  os << "\n}\n";
  return os.str();
}

}  // namespace smallmass
