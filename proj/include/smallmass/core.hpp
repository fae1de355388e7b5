#pragma once

// Problem definition layer: kinetic energy models K~(eps,t,zeta) with
// zeta = u^T A(t,q) u / eps and u = p - psi(t,q), the SystemSpec coefficient
// bundle for
//   dq =  grad_p H dt
//   dp = (-gamma grad_p H - grad_q H + F) dt + sigma dW,
// H = K~ + V(t,q), plus evaluation helpers (analytic derivatives when the
// spec carries them, central differences otherwise) and the builtin registry.

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "smallmass/common.hpp"

namespace smallmass {

enum class KineticKind { Quadratic, PolynomialRadial, NuclearLog, Custom };
enum class NuclearScaling { Unscaled, ZetaScaled };

class KineticEnergyModel {
 public:
  using ScalarFn = std::function<double(double)>;              // t -> d_l(t)
  using ZetaFn = std::function<double(double, double, double)>;  // (eps,t,zeta)

  static KineticEnergyModel quadratic(double m) {
    require(m > 0.0, "kinetic: mass must be positive");
    KineticEnergyModel k;
    k.kind_ = KineticKind::Quadratic;
    k.m_ = m;
    return k;
  }

  static KineticEnergyModel polynomial_radial(int k1, int k2,
                                              std::vector<ScalarFn> d) {
    require(1 <= k1 && k1 <= k2, "kinetic: need 1 <= k1 <= k2");
    require((int)d.size() == k2 - k1 + 1,
            "kinetic: need one coefficient per degree k1..k2");
    for (const auto& f : d) require((bool)f, "kinetic: null coefficient callable");
    KineticEnergyModel k;
    k.kind_ = KineticKind::PolynomialRadial;
    k.k1_ = k1;
    k.k2_ = k2;
    k.d_ = std::move(d);
    return k;
  }

  static KineticEnergyModel polynomial_radial(int k1, int k2,
                                              const std::vector<double>& d) {
    require((int)d.size() == k2 - k1 + 1,
            "kinetic: need one coefficient per degree k1..k2");
    require(d.front() > 0.0 && d.back() > 0.0,
            "kinetic: leading and trailing polynomial coefficients must be positive");
    std::vector<ScalarFn> fns;
    for (double c : d) fns.push_back([c](double) { return c; });
    return polynomial_radial(k1, k2, std::move(fns));
  }

  static KineticEnergyModel nuclear_log(double c1, double c2, double m,
                                        NuclearScaling scaling) {
    require(c1 > 0.0 && c2 > 0.0, "kinetic: nuclear constants must be positive");
    require(m > 0.0, "kinetic: mass must be positive");
    KineticEnergyModel k;
    k.kind_ = KineticKind::NuclearLog;
    k.c1_ = c1;
    k.c2_ = c2;
    k.m_ = m;
    k.scaling_ = scaling;
    return k;
  }

  static KineticEnergyModel custom(ZetaFn f, ZetaFn fz, ZetaFn fzz, ZetaFn ft) {
    require(f && fz && fzz && ft, "kinetic: custom model needs all four callables");
    KineticEnergyModel k;
    k.kind_ = KineticKind::Custom;
    k.f_ = std::move(f);
    k.fz_ = std::move(fz);
    k.fzz_ = std::move(fzz);
    k.ft_ = std::move(ft);
    return k;
  }

  KineticKind kind() const { return kind_; }
  double mass() const { return m_; }
  int poly_k1() const { return k1_; }
  int poly_k2() const { return k2_; }
  NuclearScaling scaling() const { return scaling_; }
  double poly_coeff(int l, double t) const { return d_.at(l - k1_)(t); }

  double value(double eps, double t, double zeta) const {
    switch (kind_) {
      case KineticKind::Quadratic:
        return zeta / (2.0 * m_);
      case KineticKind::PolynomialRadial: {
        double s = 0.0;
        for (int l = k1_; l <= k2_; ++l)
          s += d_[l - k1_](t) * std::pow(zeta, double(l));
        return s;
      }
      case KineticKind::NuclearLog: {
        const double a = log_scale(eps);
        const double s = std::log1p(a * zeta);
        return zeta / (2.0 * m_) + c1_ * s * s;
      }
      case KineticKind::Custom:
        return f_(eps, t, zeta);
    }
    return 0.0;
  }

  double dzeta(double eps, double t, double zeta) const {
    switch (kind_) {
      case KineticKind::Quadratic:
        return 1.0 / (2.0 * m_);
      case KineticKind::PolynomialRadial: {
        double s = 0.0;
        for (int l = k1_; l <= k2_; ++l)
          s += double(l) * d_[l - k1_](t) * std::pow(zeta, double(l - 1));
        return s;
      }
      case KineticKind::NuclearLog: {
        const double a = log_scale(eps);
        const double w = 1.0 + a * zeta;
        return 1.0 / (2.0 * m_) + 2.0 * c1_ * a * std::log(w) / w;
      }
      case KineticKind::Custom:
        return fz_(eps, t, zeta);
    }
    return 0.0;
  }

  double d2zeta(double eps, double t, double zeta) const {
    switch (kind_) {
      case KineticKind::Quadratic:
        return 0.0;
      case KineticKind::PolynomialRadial: {
        double s = 0.0;
        for (int l = std::max(k1_, 2); l <= k2_; ++l)
          s += double(l) * double(l - 1) * d_[l - k1_](t) *
               std::pow(zeta, double(l - 2));
        return s;
      }
      case KineticKind::NuclearLog: {
        const double a = log_scale(eps);
        const double w = 1.0 + a * zeta;
        return 2.0 * c1_ * a * a * (1.0 - std::log(w)) / (w * w);
      }
      case KineticKind::Custom:
        return fzz_(eps, t, zeta);
    }
    return 0.0;
  }

  double dt(double eps, double t, double zeta) const {
    switch (kind_) {
      case KineticKind::Quadratic:
      case KineticKind::NuclearLog:
        return 0.0;
      case KineticKind::PolynomialRadial: {
        const double h = fd_step(t);
        return (value(eps, t + h, zeta) - value(eps, t - h, zeta)) /
               ((t + h) - (t - h));
      }
      case KineticKind::Custom:
        return ft_(eps, t, zeta);
    }
    return 0.0;
  }

 private:
  double log_scale(double eps) const {
    return scaling_ == NuclearScaling::Unscaled ? c2_ * eps : c2_;
  }

  KineticKind kind_ = KineticKind::Quadratic;
  double m_ = 1.0;
  int k1_ = 1, k2_ = 1;
  std::vector<ScalarFn> d_;
  double c1_ = 0.0, c2_ = 0.0;
  NuclearScaling scaling_ = NuclearScaling::ZetaScaled;
  ZetaFn f_, fz_, fzz_, ft_;
};

struct State {
  double t = 0.0;
  Vec q, p;
};

// Coefficient bundle. Callable signatures:
//   A, psi, V, gamma:  (t, q)
//   sigma, F:          (t, q, p)
// Optional analytic derivative slots; empty slots fall back to central
// differences with step max(1,|coord|)*eps_mach^{1/3}. Derivative shapes:
//   dpsi_dq(t,q)(i,k)   = d psi_i / d q^k
//   dA_dq(t,q,i)        = d A / d q^i          (n x n)
//   dgamma_dq(t,q,i)    = d gamma / d q^i      (n x n)
struct SystemSpec {
  int n = 0;  // state dimension
  int k = 0;  // noise dimension
  KineticEnergyModel kinetic = KineticEnergyModel::quadratic(1.0);

  std::function<Mat(double, const Vec&)> A;
  std::function<Vec(double, const Vec&)> psi;
  std::function<double(double, const Vec&)> V;
  std::function<Mat(double, const Vec&)> gamma;
  std::function<Mat(double, const Vec&, const Vec&)> sigma;
  std::function<Vec(double, const Vec&, const Vec&)> F;

  std::function<Mat(double, const Vec&)> dA_dt;
  std::function<Mat(double, const Vec&, int)> dA_dq;
  std::function<Vec(double, const Vec&)> dpsi_dt;
  std::function<Mat(double, const Vec&)> dpsi_dq;
  std::function<Vec(double, const Vec&)> dV_dq;
  std::function<Mat(double, const Vec&, int)> dgamma_dq;

  std::string name;                      // builtin name, empty for API-built specs
  std::map<std::string, double> params;  // resolved builtin parameters
};

inline void check_spec(const SystemSpec& s) {
  require(s.n >= 1, "spec: state dimension n must be >= 1");
  require(s.k >= 1, "spec: noise dimension k must be >= 1");
  require((bool)s.A && (bool)s.psi && (bool)s.V && (bool)s.gamma &&
              (bool)s.sigma && (bool)s.F,
          "spec: A, psi, V, gamma, sigma, F must all be set");
}

inline Mat eval_A(const SystemSpec& s, double t, const Vec& q) {
  Mat A = s.A(t, q);
  ensure_shape(A, s.n, s.n, "A");
  ensure_finite(A, "A");
  return A;
}

inline Vec eval_psi(const SystemSpec& s, double t, const Vec& q) {
  Vec v = s.psi(t, q);
  ensure_size(v, s.n, "psi");
  ensure_finite(v, "psi");
  return v;
}

inline double eval_V(const SystemSpec& s, double t, const Vec& q) {
  double v = s.V(t, q);
  ensure_finite(v, "V");
  return v;
}

inline Mat eval_gamma(const SystemSpec& s, double t, const Vec& q) {
  Mat g = s.gamma(t, q);
  ensure_shape(g, s.n, s.n, "gamma");
  ensure_finite(g, "gamma");
  return g;
}

inline Mat eval_sigma(const SystemSpec& s, double t, const Vec& q, const Vec& p) {
  Mat m = s.sigma(t, q, p);
  ensure_shape(m, s.n, s.k, "sigma");
  ensure_finite(m, "sigma");
  return m;
}

inline Vec eval_F(const SystemSpec& s, double t, const Vec& q, const Vec& p) {
  Vec f = s.F(t, q, p);
  ensure_size(f, s.n, "F");
  ensure_finite(f, "F");
  return f;
}

// d psi_i / d q^k in column k; analytic slot if present, else central FD.
inline Mat dpsi_dq_eval(const SystemSpec& s, double t, const Vec& q) {
  if (s.dpsi_dq) {
    Mat D = s.dpsi_dq(t, q);
    ensure_shape(D, s.n, s.n, "dpsi_dq");
    ensure_finite(D, "dpsi_dq");
    return D;
  }
  Mat D(s.n, s.n);
  Vec qp = q, qm = q;
  for (int k = 0; k < s.n; ++k) {
    const double h = fd_step(q[k]);
    qp[k] = q[k] + h;
    qm[k] = q[k] - h;
    D.col(k) = (eval_psi(s, t, qp) - eval_psi(s, t, qm)) / (qp[k] - qm[k]);
    qp[k] = q[k];
    qm[k] = q[k];
  }
  return D;
}

inline Vec dpsi_dt_eval(const SystemSpec& s, double t, const Vec& q) {
  if (s.dpsi_dt) {
    Vec v = s.dpsi_dt(t, q);
    ensure_size(v, s.n, "dpsi_dt");
    ensure_finite(v, "dpsi_dt");
    return v;
  }
  const double h = fd_step(t);
  return (eval_psi(s, t + h, q) - eval_psi(s, t - h, q)) / ((t + h) - (t - h));
}

inline Vec dV_dq_eval(const SystemSpec& s, double t, const Vec& q) {
  if (s.dV_dq) {
    Vec v = s.dV_dq(t, q);
    ensure_size(v, s.n, "dV_dq");
    ensure_finite(v, "dV_dq");
    return v;
  }
  Vec g(s.n);
  Vec qp = q, qm = q;
  for (int k = 0; k < s.n; ++k) {
    const double h = fd_step(q[k]);
    qp[k] = q[k] + h;
    qm[k] = q[k] - h;
    g[k] = (eval_V(s, t, qp) - eval_V(s, t, qm)) / (qp[k] - qm[k]);
    qp[k] = q[k];
    qm[k] = q[k];
  }
  return g;
}

inline Mat dA_dq_eval(const SystemSpec& s, double t, const Vec& q, int i) {
  if (s.dA_dq) {
    Mat D = s.dA_dq(t, q, i);
    ensure_shape(D, s.n, s.n, "dA_dq");
    ensure_finite(D, "dA_dq");
    return D;
  }
  Vec qp = q, qm = q;
  const double h = fd_step(q[i]);
  qp[i] += h;
  qm[i] -= h;
  return ((eval_A(s, t, qp) - eval_A(s, t, qm)) / (qp[i] - qm[i])).eval();
}

inline Mat dA_dt_eval(const SystemSpec& s, double t, const Vec& q) {
  if (s.dA_dt) {
    Mat D = s.dA_dt(t, q);
    ensure_shape(D, s.n, s.n, "dA_dt");
    ensure_finite(D, "dA_dt");
    return D;
  }
  const double h = fd_step(t);
  return ((eval_A(s, t + h, q) - eval_A(s, t - h, q)) / ((t + h) - (t - h))).eval();
}

inline Mat dgamma_dq_eval(const SystemSpec& s, double t, const Vec& q, int i) {
  if (s.dgamma_dq) {
    Mat D = s.dgamma_dq(t, q, i);
    ensure_shape(D, s.n, s.n, "dgamma_dq");
    ensure_finite(D, "dgamma_dq");
    return D;
  }
  Vec qp = q, qm = q;
  const double h = fd_step(q[i]);
  qp[i] += h;
  qm[i] -= h;
  return ((eval_gamma(s, t, qp) - eval_gamma(s, t, qm)) / (qp[i] - qm[i])).eval();
}

// d/dq^k of the psi Jacobian; FD of the (analytic or FD) first derivative.
inline Mat d2psi_dq2_eval(const SystemSpec& s, double t, const Vec& q, int k) {
  Vec qp = q, qm = q;
  const double h = fd_step(q[k]);
  qp[k] += h;
  qm[k] -= h;
  return ((dpsi_dq_eval(s, t, qp) - dpsi_dq_eval(s, t, qm)) / (qp[k] - qm[k]))
      .eval();
}

inline double eval_zeta(const SystemSpec& s, double eps, const State& x) {
  require(eps > 0.0, "eval: eps must be positive");
  const Vec u = x.p - eval_psi(s, x.t, x.q);
  const Mat A = eval_A(s, x.t, x.q);
  return u.dot(A * u) / eps;
}

inline double eval_kinetic(const SystemSpec& s, double eps, const State& x) {
  const double K = s.kinetic.value(eps, x.t, eval_zeta(s, eps, x));
  ensure_finite(K, "kinetic");
  return K;
}

// grad_p H = (2/eps) K~'(zeta) A u
inline Vec grad_p_H(const SystemSpec& s, double eps, const State& x) {
  require(eps > 0.0, "eval: eps must be positive");
  const Vec u = x.p - eval_psi(s, x.t, x.q);
  const Mat A = eval_A(s, x.t, x.q);
  const Vec Au = A * u;
  const double zeta = u.dot(Au) / eps;
  Vec g = (2.0 / eps) * s.kinetic.dzeta(eps, x.t, zeta) * Au;
  ensure_finite(g, "grad_p_H");
  return g;
}

// grad_q H)_i = d_i V + K~'(zeta) * [u^T (d_i A) u - 2 (Au)^T dpsi/dq^i] / eps
inline Vec grad_q_H(const SystemSpec& s, double eps, const State& x) {
  require(eps > 0.0, "eval: eps must be positive");
  const Vec u = x.p - eval_psi(s, x.t, x.q);
  const Mat A = eval_A(s, x.t, x.q);
  const Vec Au = A * u;
  const double zeta = u.dot(Au) / eps;
  const double kz = s.kinetic.dzeta(eps, x.t, zeta);
  const Mat Dpsi = dpsi_dq_eval(s, x.t, x.q);
  Vec g = dV_dq_eval(s, x.t, x.q);
  for (int i = 0; i < s.n; ++i) {
    const Mat dAi = dA_dq_eval(s, x.t, x.q, i);
    g[i] += kz * (u.dot(dAi * u) - 2.0 * Au.dot(Dpsi.col(i))) / eps;
  }
  ensure_finite(g, "grad_q_H");
  return g;
}

inline double eval_hamiltonian(const SystemSpec& s, double eps, const State& x) {
  return eval_kinetic(s, eps, x) + eval_V(s, x.t, x.q);
}

// ---------------------------------------------------------------------------
// Builtin registry

struct ParamDoc {
  std::string name;
  bool required = false;
  double def = 0.0;        // ignored when contextual
  bool contextual = false;  // presence decided by other parameters (poly d_j)
  std::string doc;
};

struct BuiltinDoc {
  std::string name;
  std::string summary;
  std::vector<ParamDoc> params;
};

inline const std::vector<BuiltinDoc>& builtin_registry() {
  static const std::vector<BuiltinDoc> reg = {
      {"ou-linear",
       "linear test bench: A=1, psi=0, V = omega^2 q^2/2, constant gamma; the "
       "limit is an Ornstein-Uhlenbeck process with known Gibbs statistics",
       {{"m", false, 1.0, false, "kinetic mass"},
        {"gamma", false, 1.0, false, "drag coefficient"},
        {"kBT", false, 1.0, false, "temperature, sets sigma = sqrt(2 kBT gamma)"},
        {"omega", false, 1.0, false, "harmonic stiffness"}}},
      {"em1d",
       "1d charged particle: gamma(q) = gamma0 + gamma1 sin q, psi = "
       "e (phi0 + phi1 sin q) mod(t), V = omega_v^2 q^2/2, quadratic kinetic "
       "energy; defaults give the position-dependent-drag benchmark",
       {{"m", false, 1.0, false, "kinetic mass"},
        {"e", false, 1.0, false, "charge"},
        {"gamma0", false, 2.0, false, "drag offset, needs gamma0 > |gamma1|"},
        {"gamma1", false, 1.0, false, "drag modulation amplitude"},
        {"kBT", false, 1.0, false, "temperature, sets sigma = sqrt(2 kBT gamma(q))"},
        {"phi0", false, 0.0, false, "vector potential offset"},
        {"phi1", false, 0.0, false, "vector potential modulation amplitude"},
        {"omega_v", false, 1.0, false, "harmonic stiffness of V"},
        {"tmod_amp", false, 0.0, false, "time modulation of psi: 1 + amp sin(freq t)"},
        {"tmod_freq", false, 0.0, false, "time modulation frequency"}}},
      {"em2d",
       "2d charged particle in a constant magnetic field: psi = e B/2 (-q2, q1), "
       "constant scalar drag, V = omega_v^2 |q|^2/2, optional constant electric "
       "field; gamma-tilde picks up the antisymmetric magnetic part",
       {{"m", false, 1.0, false, "kinetic mass"},
        {"e", false, 1.0, false, "charge"},
        {"B", false, 1.0, false, "magnetic field strength"},
        {"gamma", false, 2.0, false, "scalar drag"},
        {"kBT", false, 1.0, false, "temperature, sets sigma = sqrt(2 kBT gamma)"},
        {"omega_v", false, 1.0, false, "harmonic stiffness of V"},
        {"E1", false, 0.0, false, "electric field, first component"},
        {"E2", false, 0.0, false, "electric field, second component"}}},
      {"manifold1d",
       "1d diffusion on a line with metric g(q) = g0 + g1 q^2: A = 1/g, "
       "quadratic kinetic energy, constant drag; the noise-induced drift "
       "carries the metric divergence term",
       {{"m", false, 1.0, false, "kinetic mass"},
        {"gamma", false, 1.0, false, "scalar drag"},
        {"kBT", false, 1.0, false, "temperature, sets sigma = sqrt(2 kBT gamma)"},
        {"g0", false, 1.0, false, "metric offset, needs g0 > 0"},
        {"g1", false, 1.0, false, "metric curvature, needs g1 >= 0"},
        {"omega_v", false, 1.0, false, "harmonic stiffness of V"}}},
      {"manifold2d",
       "2d diagonal metric g_ii(q) = g0 + g1 sin(q_i), A = g^{-1}, quadratic "
       "kinetic energy, constant scalar drag",
       {{"m", false, 1.0, false, "kinetic mass"},
        {"gamma", false, 1.0, false, "scalar drag"},
        {"kBT", false, 1.0, false, "temperature, sets sigma = sqrt(2 kBT gamma)"},
        {"g0", false, 2.0, false, "metric offset, needs g0 > |g1|"},
        {"g1", false, 1.0, false, "metric modulation amplitude"},
        {"omega_v", false, 1.0, false, "harmonic stiffness of V"}}},
      {"poly1d",
       "1d polynomial-radial kinetic energy K~ = sum_{l=k1}^{k2} d_l zeta^l "
       "with constant coefficients, drag gamma(q) = gamma0 + gamma1 sin q",
       {{"k1", false, 1.0, false, "lowest polynomial degree, integer >= 1"},
        {"k2", false, 2.0, false, "highest polynomial degree, integer >= k1"},
        {"d1", false, 0.5, true, "coefficient of zeta^{k1}"},
        {"d2", false, 0.25, true, "coefficient of zeta^{k1+1}"},
        {"d3", false, 0.0, true, "coefficient of zeta^{k1+2}"},
        {"d4", false, 0.0, true, "coefficient of zeta^{k1+3}"},
        {"d5", false, 0.0, true, "coefficient of zeta^{k1+4}"},
        {"d6", false, 0.0, true, "coefficient of zeta^{k1+5}"},
        {"gamma0", false, 2.0, false, "drag offset, needs gamma0 > |gamma1|"},
        {"gamma1", false, 1.0, false, "drag modulation amplitude"},
        {"kBT", false, 1.0, false, "temperature, sets sigma = sqrt(2 kBT gamma(q))"},
        {"omega_v", false, 1.0, false, "harmonic stiffness of V"}}},
      {"nuclear1d",
       "1d quadratic-plus-squared-logarithm kinetic energy "
       "K~ = zeta/(2m) + c1 ln^2(1 + c2 zeta), constant drag; scaling=0 "
       "multiplies c2 by eps inside the logarithm, scaling=1 leaves it on zeta",
       {{"c1", false, 1.0, false, "logarithm strength, needs c1 > 0"},
        {"c2", false, 1.0, false, "logarithm scale, needs c2 > 0"},
        {"m", false, 1.0, false, "kinetic mass"},
        {"gamma", false, 1.0, false, "scalar drag"},
        {"kBT", false, 1.0, false, "temperature, sets sigma = sqrt(2 kBT gamma)"},
        {"omega_v", false, 1.0, false, "harmonic stiffness of V"},
        {"scaling", false, 1.0, false, "0 = eps-scaled logarithm, 1 = zeta-scaled"}}},
  };
  return reg;
}

namespace detail {

inline const BuiltinDoc& find_builtin_doc(const std::string& name) {
  for (const auto& d : builtin_registry())
    if (d.name == name) return d;
  std::string known;
  for (const auto& d : builtin_registry()) known += " " + d.name;
  throw ConfigError("unknown system '" + name + "'; known systems:" + known);
}

inline std::map<std::string, double> resolve_params(
    const BuiltinDoc& doc, const std::map<std::string, double>& in) {
  for (const auto& [k, v] : in) {
    bool found = false;
    for (const auto& p : doc.params) found |= (p.name == k);
    if (!found)
      throw ConfigError("system " + doc.name + ": unknown parameter '" + k + "'");
    if (!std::isfinite(v))
      throw ConfigError("system " + doc.name + ": parameter '" + k +
                        "' is not finite");
  }
  std::map<std::string, double> out;
  for (const auto& p : doc.params) {
    auto it = in.find(p.name);
    if (it != in.end()) {
      out[p.name] = it->second;
    } else if (p.required) {
      throw ConfigError("system " + doc.name + ": missing required parameter '" +
                        p.name + "'");
    } else if (!p.contextual) {
      out[p.name] = p.def;
    }
  }
  return out;
}

}  // namespace detail

inline SystemSpec make_builtin(const std::string& name,
                               const std::map<std::string, double>& params = {});

inline std::string registry_manifest_json() {
  std::ostringstream os;
  os << "{\n  \"schema_version\": \"1\",\n  \"systems\": [";
  bool first_sys = true;
  for (const auto& d : builtin_registry()) {
    os << (first_sys ? "\n" : ",\n");
    first_sys = false;
    os << "    {\n      \"name\": \"" << d.name << "\",\n      \"summary\": \""
       << d.summary << "\",\n      \"params\": [";
    bool first_par = true;
    for (const auto& p : d.params) {
      os << (first_par ? "\n" : ",\n");
      first_par = false;
      os << "        {\"name\": \"" << p.name
         << "\", \"required\": " << (p.required ? "true" : "false")
         << ", \"default\": ";
      if (p.contextual)
        os << "null";
      else
        os << format_double(p.def);
      os << ", \"doc\": \"" << p.doc << "\"}";
    }
    os << "\n      ]\n    }";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

namespace detail {

// Shared scaffolding for the 1d/2d builtins.
inline SystemSpec base_spec(int n, const std::string& name,
                            std::map<std::string, double> resolved) {
  SystemSpec s;
  s.n = n;
  s.k = n;
  s.name = name;
  s.params = std::move(resolved);
  const Vec zero = Vec::Zero(n);
  const Mat zmat = Mat::Zero(n, n);
  s.psi = [zero](double, const Vec&) { return zero; };
  s.dpsi_dq = [zmat](double, const Vec&) { return zmat; };
  s.dpsi_dt = [zero](double, const Vec&) { return zero; };
  s.F = [zero](double, const Vec&, const Vec&) { return zero; };
  s.dA_dt = [zmat](double, const Vec&) { return zmat; };
  s.dA_dq = [zmat](double, const Vec&, int) { return zmat; };
  s.dgamma_dq = [zmat](double, const Vec&, int) { return zmat; };
  return s;
}

inline void set_harmonic_V(SystemSpec& s, double omega) {
  const double w2 = omega * omega;
  s.V = [w2](double, const Vec& q) { return 0.5 * w2 * q.squaredNorm(); };
  s.dV_dq = [w2](double, const Vec& q) { return (w2 * q).eval(); };
}

inline void set_identity_A(SystemSpec& s, int n) {
  const Mat In = Mat::Identity(n, n);
  s.A = [In](double, const Vec&) { return In; };
}

inline void set_constant_gamma(SystemSpec& s, int n, double gamma, double kBT) {
  const Mat G = gamma * Mat::Identity(n, n);
  const Mat Sg = std::sqrt(2.0 * kBT * gamma) * Mat::Identity(n, n);
  s.gamma = [G](double, const Vec&) { return G; };
  s.sigma = [Sg](double, const Vec&, const Vec&) { return Sg; };
}

}  // namespace detail

inline SystemSpec make_builtin(const std::string& name,
                               const std::map<std::string, double>& params) {
  const BuiltinDoc& doc = detail::find_builtin_doc(name);
  auto pr = detail::resolve_params(doc, params);
  auto positive = [&](const char* key) {
    if (!(pr.at(key) > 0.0))
      throw ConfigError("system " + name + ": parameter '" + key +
                        "' must be positive");
    return pr.at(key);
  };

  if (name == "ou-linear") {
    SystemSpec s = detail::base_spec(1, name, pr);
    s.kinetic = KineticEnergyModel::quadratic(positive("m"));
    detail::set_identity_A(s, 1);
    detail::set_constant_gamma(s, 1, positive("gamma"), positive("kBT"));
    detail::set_harmonic_V(s, pr.at("omega"));
    return s;
  }

  if (name == "em1d") {
    const double g0 = pr.at("gamma0"), g1 = pr.at("gamma1");
    if (!(g0 - std::abs(g1) > 0.0))
      throw ConfigError("system em1d: need gamma0 > |gamma1| for a positive drag");
    const double kBT = positive("kBT"), e = pr.at("e");
    const double phi0 = pr.at("phi0"), phi1 = pr.at("phi1");
    const double ta = pr.at("tmod_amp"), tf = pr.at("tmod_freq");
    SystemSpec s = detail::base_spec(1, name, pr);
    s.kinetic = KineticEnergyModel::quadratic(positive("m"));
    detail::set_identity_A(s, 1);
    detail::set_harmonic_V(s, pr.at("omega_v"));
    auto gam = [g0, g1](double q) { return g0 + g1 * std::sin(q); };
    s.gamma = [gam](double, const Vec& q) {
      return (Mat(1, 1) << gam(q[0])).finished();
    };
    s.dgamma_dq = [g1](double, const Vec& q, int) {
      return (Mat(1, 1) << g1 * std::cos(q[0])).finished();
    };
    s.sigma = [gam, kBT](double, const Vec& q, const Vec&) {
      return (Mat(1, 1) << std::sqrt(2.0 * kBT * gam(q[0]))).finished();
    };
    auto mod = [ta, tf](double t) { return 1.0 + ta * std::sin(tf * t); };
    s.psi = [e, phi0, phi1, mod](double t, const Vec& q) {
      return (Vec(1) << e * (phi0 + phi1 * std::sin(q[0])) * mod(t)).finished();
    };
    s.dpsi_dq = [e, phi1, mod](double t, const Vec& q) {
      return (Mat(1, 1) << e * phi1 * std::cos(q[0]) * mod(t)).finished();
    };
    s.dpsi_dt = [e, phi0, phi1, ta, tf](double t, const Vec& q) {
      return (Vec(1) << e * (phi0 + phi1 * std::sin(q[0])) * ta * tf *
                            std::cos(tf * t))
          .finished();
    };
    return s;
  }

  if (name == "em2d") {
    const double e = pr.at("e"), B = pr.at("B");
    const double E1 = pr.at("E1"), E2 = pr.at("E2");
    SystemSpec s = detail::base_spec(2, name, pr);
    s.kinetic = KineticEnergyModel::quadratic(positive("m"));
    detail::set_identity_A(s, 2);
    detail::set_constant_gamma(s, 2, positive("gamma"), positive("kBT"));
    detail::set_harmonic_V(s, pr.at("omega_v"));
    const double c = 0.5 * e * B;
    s.psi = [c](double, const Vec& q) {
      return (Vec(2) << -c * q[1], c * q[0]).finished();
    };
    const Mat Dpsi = (Mat(2, 2) << 0.0, -c, c, 0.0).finished();
    s.dpsi_dq = [Dpsi](double, const Vec&) { return Dpsi; };
    const Vec Ef = (Vec(2) << e * E1, e * E2).finished();
    s.F = [Ef](double, const Vec&, const Vec&) { return Ef; };
    return s;
  }

  if (name == "manifold1d") {
    const double g0 = pr.at("g0"), g1 = pr.at("g1");
    if (!(g0 > 0.0) || g1 < 0.0)
      throw ConfigError("system manifold1d: need g0 > 0 and g1 >= 0");
    SystemSpec s = detail::base_spec(1, name, pr);
    s.kinetic = KineticEnergyModel::quadratic(positive("m"));
    detail::set_constant_gamma(s, 1, positive("gamma"), positive("kBT"));
    detail::set_harmonic_V(s, pr.at("omega_v"));
    auto g = [g0, g1](double q) { return g0 + g1 * q * q; };
    s.A = [g](double, const Vec& q) {
      return (Mat(1, 1) << 1.0 / g(q[0])).finished();
    };
    s.dA_dq = [g, g1](double, const Vec& q, int) {
      const double gg = g(q[0]);
      return (Mat(1, 1) << -2.0 * g1 * q[0] / (gg * gg)).finished();
    };
    return s;
  }

  if (name == "manifold2d") {
    const double g0 = pr.at("g0"), g1 = pr.at("g1");
    if (!(g0 - std::abs(g1) > 0.0))
      throw ConfigError("system manifold2d: need g0 > |g1| for a positive metric");
    SystemSpec s = detail::base_spec(2, name, pr);
    s.kinetic = KineticEnergyModel::quadratic(positive("m"));
    detail::set_constant_gamma(s, 2, positive("gamma"), positive("kBT"));
    detail::set_harmonic_V(s, pr.at("omega_v"));
    auto g = [g0, g1](double qi) { return g0 + g1 * std::sin(qi); };
    s.A = [g](double, const Vec& q) {
      Mat A = Mat::Zero(2, 2);
      A(0, 0) = 1.0 / g(q[0]);
      A(1, 1) = 1.0 / g(q[1]);
      return A;
    };
    s.dA_dq = [g, g1](double, const Vec& q, int i) {
      Mat D = Mat::Zero(2, 2);
      const double gi = g(q[i]);
      D(i, i) = -g1 * std::cos(q[i]) / (gi * gi);
      return D;
    };
    return s;
  }

  if (name == "poly1d") {
    const double k1d = pr.at("k1"), k2d = pr.at("k2");
    const int k1 = (int)std::lround(k1d), k2 = (int)std::lround(k2d);
    if (k1 != k1d || k2 != k2d || k1 < 1 || k2 < k1 || k2 > 6)
      throw ConfigError("system poly1d: need integer 1 <= k1 <= k2 <= 6");
    const int K = k2 - k1 + 1;
    std::vector<double> coeffs;
    for (int j = 1; j <= 6; ++j) {
      const std::string key = "d" + std::to_string(j);
      if (j <= K) {
        if (params.count(key)) {
          coeffs.push_back(params.at(key));
        } else if (j == 1) {
          coeffs.push_back(0.5);
        } else if (j == 2) {
          coeffs.push_back(0.25);
        } else {
          throw ConfigError("system poly1d: missing required parameter '" + key +
                            "' (degrees k1=" + std::to_string(k1) +
                            " .. k2=" + std::to_string(k2) + " need " +
                            std::to_string(K) + " coefficients)");
        }
        pr[key] = coeffs.back();
      } else if (params.count(key)) {
        throw ConfigError("system poly1d: parameter '" + key +
                          "' is unused with k1=" + std::to_string(k1) +
                          ", k2=" + std::to_string(k2));
      }
    }
    for (double c : coeffs)
      if (c < 0.0)
        throw ConfigError("system poly1d: polynomial coefficients must be >= 0");
    if (!(coeffs.front() > 0.0 && coeffs.back() > 0.0))
      throw ConfigError(
          "system poly1d: leading and trailing coefficients must be positive");
    const double g0 = pr.at("gamma0"), g1 = pr.at("gamma1");
    if (!(g0 - std::abs(g1) > 0.0))
      throw ConfigError("system poly1d: need gamma0 > |gamma1| for a positive drag");
    const double kBT = positive("kBT");
    SystemSpec s = detail::base_spec(1, name, pr);
    s.kinetic = KineticEnergyModel::polynomial_radial(k1, k2, coeffs);
    detail::set_identity_A(s, 1);
    detail::set_harmonic_V(s, pr.at("omega_v"));
    auto gam = [g0, g1](double q) { return g0 + g1 * std::sin(q); };
    s.gamma = [gam](double, const Vec& q) {
      return (Mat(1, 1) << gam(q[0])).finished();
    };
    s.dgamma_dq = [g1](double, const Vec& q, int) {
      return (Mat(1, 1) << g1 * std::cos(q[0])).finished();
    };
    s.sigma = [gam, kBT](double, const Vec& q, const Vec&) {
      return (Mat(1, 1) << std::sqrt(2.0 * kBT * gam(q[0]))).finished();
    };
    return s;
  }

  if (name == "nuclear1d") {
    const double sc = pr.at("scaling");
    if (sc != 0.0 && sc != 1.0)
      throw ConfigError("system nuclear1d: scaling must be 0 or 1");
    SystemSpec s = detail::base_spec(1, name, pr);
    s.kinetic = KineticEnergyModel::nuclear_log(
        positive("c1"), positive("c2"), positive("m"),
        sc == 0.0 ? NuclearScaling::Unscaled : NuclearScaling::ZetaScaled);
    detail::set_identity_A(s, 1);
    detail::set_constant_gamma(s, 1, positive("gamma"), positive("kBT"));
    detail::set_harmonic_V(s, pr.at("omega_v"));
    return s;
  }

  throw ConfigError("unknown system '" + name + "'");
}

}  // namespace smallmass
