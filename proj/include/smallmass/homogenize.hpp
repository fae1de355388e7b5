#pragma once

// Assembly of the limiting (homogenized) SDE for the position variable.
// In index form, with summation over repeated indices:
//   gamma~_ik   = gamma_ik + d_{q^k} psi_i - d_{q^i} psi_k
//   Q^{ijl}     = d_{q^k}(gamma~^{-1})^{ij} A^{kl}
//                 - (1/2) (gamma~^{-1})^{ik} d_{q^k} A^{jl}
//   J           solves (gamma~ A) J + J (gamma~ A)^T = sigma sigma^T
//   S^i         = Q^{ijl} J_{jl}
//   drift       = gamma~^{-1} (-dpsi/dt - grad_q V + F(t,q,psi)) + S
//   diffusion   = gamma~^{-1} sigma(t,q,psi)
// The inner-index placement of the drag-metric product was fixed against two
// closed forms that disagree under the alternative ordering when gamma and A
// do not commute: A = I gives J = kBT I, and A = g^{-1} gives J = kBT g, both
// from sigma sigma^T = 2 kBT gamma. Spectra of gamma~A and A gamma~ coincide,
// so stability statements are unaffected by the choice.

#include "smallmass/core.hpp"
#include "smallmass/linalg.hpp"

namespace smallmass {

struct DriftAssembly {
  double t = 0.0;
  Vec q;
  Mat gamma_tilde;
  Mat gamma_tilde_inv;
  std::vector<Mat> Q;  // Q[i](j,l)
  Mat J;
  Vec S;
  Vec limiting_drift;
  Mat limiting_diffusion;
};

inline Mat tilde_gamma(const SystemSpec& s, double t, const Vec& q) {
  const Mat D = dpsi_dq_eval(s, t, q);
  return eval_gamma(s, t, q) + D - D.transpose();
}

inline Mat dgamma_tilde_dq(const SystemSpec& s, double t, const Vec& q, int k) {
  const Mat dD = d2psi_dq2_eval(s, t, q, k);
  return dgamma_dq_eval(s, t, q, k) + dD - dD.transpose();
}

namespace detail {

inline void invert_checked(const Mat& gt, Mat& gti) {
  const Eigen::Index n = gt.rows();
  if (n == 1) {
    if (gt(0, 0) == 0.0)
      throw LinalgError("tilde-gamma is singular (zero in dimension 1)");
    gti.resize(1, 1);
    gti(0, 0) = 1.0 / gt(0, 0);
  } else {
    gti = gt.partialPivLu().inverse();
  }
  const double defect = (gti * gt - Mat::Identity(n, n)).norm();
  if (!(defect <= 1e-10))
    throw LinalgError("tilde-gamma inverse defect " + format_double(defect) +
                      " exceeds 1e-10 (matrix near-singular)");
}

}  // namespace detail

// Full assembly at one (t,q). The _into variant reuses the output's storage,
// which matters in the limit integrator's inner loop.
inline void limiting_coeffs_into(const SystemSpec& s, double t, const Vec& q,
                                 DriftAssembly& out) {
  const int n = s.n;
  out.t = t;
  out.q = q;

  out.gamma_tilde = tilde_gamma(s, t, q);
  detail::invert_checked(out.gamma_tilde, out.gamma_tilde_inv);
  const Mat& gti = out.gamma_tilde_inv;

  const Mat A = eval_A(s, t, q);

  if ((int)out.Q.size() != n) out.Q.assign(n, Mat(n, n));
  for (auto& Qi : out.Q) Qi.setZero(n, n);
  for (int k = 0; k < n; ++k) {
    const Mat dgt_k = dgamma_tilde_dq(s, t, q, k);
    const Mat dGi_k = (-gti * dgt_k * gti).eval();  // d_{q^k} gamma~^{-1}
    const Mat dA_k = dA_dq_eval(s, t, q, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l)
          out.Q[i](j, l) += dGi_k(i, j) * A(k, l) - 0.5 * gti(i, k) * dA_k(j, l);
  }

  const Vec psi = eval_psi(s, t, q);
  const Mat sig = eval_sigma(s, t, q, psi);
  out.J = lyap_solve({out.gamma_tilde * A, sig * sig.transpose()});

  out.S.resize(n);
  for (int i = 0; i < n; ++i) out.S[i] = out.Q[i].cwiseProduct(out.J).sum();

  out.limiting_drift =
      gti * (-dpsi_dt_eval(s, t, q) - dV_dq_eval(s, t, q) + eval_F(s, t, q, psi)) +
      out.S;
  out.limiting_diffusion = gti * sig;
}

inline DriftAssembly limiting_coeffs(const SystemSpec& s, double t, const Vec& q) {
  check_spec(s);
  DriftAssembly out;
  limiting_coeffs_into(s, t, q, out);
  return out;
}

inline std::vector<Mat> q_tensor(const SystemSpec& s, double t, const Vec& q) {
  return limiting_coeffs(s, t, q).Q;
}

inline Mat j_matrix(const SystemSpec& s, double t, const Vec& q) {
  check_spec(s);
  const Mat gt = tilde_gamma(s, t, q);
  const Vec psi = eval_psi(s, t, q);
  const Mat sig = eval_sigma(s, t, q, psi);
  return lyap_solve({gt * eval_A(s, t, q), sig * sig.transpose()});
}

inline Vec noise_drift(const SystemSpec& s, double t, const Vec& q) {
  return limiting_coeffs(s, t, q).S;
}

enum class FluctDissMode { Euclidean, Manifold };

// Closed forms for S under the fluctuation-dissipation relation
// sigma sigma^T = 2 kBT gamma (checked here), used as cross-checks of the
// generic Q:J contraction:
//   Euclidean (A = I):      S^i = kBT d_{q^k}(gamma~^{-1})^{ik}
//   Manifold  (J = kBT A^{-1}): S^i = kBT [ d_{q^k}(gamma~^{-1})^{ik}
//                                  - (1/2)(gamma~^{-1})^{ik} tr(A^{-1} d_{q^k}A) ]
inline Vec fluctdiss_drift(const SystemSpec& s, double t, const Vec& q,
                           double kBT, FluctDissMode mode) {
  check_spec(s);
  require(kBT > 0.0, "fluctdiss_drift: kBT must be positive");
  const Vec psi = eval_psi(s, t, q);
  const Mat sig = eval_sigma(s, t, q, psi);
  const Mat Sigma = sig * sig.transpose();
  const Mat gam = eval_gamma(s, t, q);
  const double defect = (Sigma - 2.0 * kBT * gam).norm();
  if (!(defect <= 1e-10 * std::max(1.0, Sigma.norm())))
    throw Error(
        "fluctdiss_drift: sigma sigma^T != 2 kBT gamma (defect " +
        format_double(defect) + "); the closed forms do not apply");

  const int n = s.n;
  const Mat gt = tilde_gamma(s, t, q);
  Mat gti;
  detail::invert_checked(gt, gti);

  Vec S = Vec::Zero(n);
  const Mat A = eval_A(s, t, q);
  Eigen::PartialPivLU<Mat> Alu;
  if (mode == FluctDissMode::Manifold) Alu.compute(A);
  for (int k = 0; k < n; ++k) {
    const Mat dgt_k = dgamma_tilde_dq(s, t, q, k);
    const Mat dGi_k = (-gti * dgt_k * gti).eval();
    S += kBT * dGi_k.col(k);
    if (mode == FluctDissMode::Manifold) {
      const Mat dA_k = dA_dq_eval(s, t, q, k);
      const double trterm = Alu.solve(dA_k).trace();
      S -= 0.5 * kBT * trterm * gti.col(k);
    }
  }
  return S;
}

}  // namespace smallmass
