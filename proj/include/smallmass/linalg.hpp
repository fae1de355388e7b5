#pragma once

// Dense small-matrix pieces: matrix exponential, spectral floors, and the
// Lyapunov equation  B J + J B^T = RHS  that produces the noise-averaging
// matrix J. Sizes are the state dimension n (single digits), so everything
// is direct: Kronecker linearization for the solve, adaptive Simpson on
// the integral representation as an independent cross-check.

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "smallmass/common.hpp"

namespace smallmass {

struct LyapunovProblem {
  Mat B;    // n x n, stable (all eigenvalues have positive real part here,
            // since we solve B J + J B^T = RHS with decay e^{-yB})
  Mat RHS;  // n x n, symmetric
};

inline Mat expm(const Mat& M) {
  require(M.rows() == M.cols(), "expm: matrix must be square");
  ensure_finite(M, "expm input");
  return M.exp();
}

// min over eigenvalues of Re(lambda)
inline double stability_margin(const Mat& B) {
  require(B.rows() == B.cols(), "stability_margin: matrix must be square");
  ensure_finite(B, "stability_margin input");
  if (B.rows() == 1) return B(0, 0);
  Eigen::EigenSolver<Mat> es(B, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw LinalgError("stability_margin: eigensolver failed to converge");
  return es.eigenvalues().real().minCoeff();
}

// Smallest eigenvalue of a matrix that is symmetric up to roundoff.
// Rejects genuinely asymmetric input instead of silently symmetrizing it.
inline double spd_floor(const Mat& M) {
  require(M.rows() == M.cols(), "spd_floor: matrix must be square");
  ensure_finite(M, "spd_floor input");
  const double asym = (M - M.transpose()).norm();
  const double tol = 1e-12 * std::max(1.0, M.norm());
  if (asym > tol)
    throw SymmetryError("spd_floor: asymmetry " + format_double(asym) +
                            " exceeds tolerance " + format_double(tol),
                        asym);
  if (M.rows() == 1) return M(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()),
                                        Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw LinalgError("spd_floor: eigensolver failed to converge");
  return es.eigenvalues().minCoeff();
}

namespace detail {

inline void check_lyapunov_problem(const LyapunovProblem& prob) {
  require(prob.B.rows() == prob.B.cols(), "lyapunov: B must be square");
  require(prob.RHS.rows() == prob.B.rows() && prob.RHS.cols() == prob.B.cols(),
          "lyapunov: RHS shape must match B");
  ensure_finite(prob.B, "lyapunov B");
  ensure_finite(prob.RHS, "lyapunov RHS");
  const double asym = (prob.RHS - prob.RHS.transpose()).norm();
  if (asym > 1e-12 * std::max(1.0, prob.RHS.norm()))
    throw SymmetryError("lyapunov: RHS asymmetry " + format_double(asym), asym);
}

inline double checked_margin(const LyapunovProblem& prob, const char* who) {
  const double margin = stability_margin(prob.B);
  if (!(margin > 0.0))
    throw LyapunovError(std::string(who) +
                        ": B is not stable, min Re eigenvalue = " +
                        format_double(margin) +
                        " (all eigenvalues of B must have positive real part)");
  return margin;
}

}  // namespace detail

// Solve B J + J B^T = RHS by vectorizing: (I (x) B + B (x) I) vec(J) = vec(RHS)
// in column-major vec convention, vec(BJ) = (I (x) B) vec(J) and
// vec(J B^T) = (B (x) I) vec(J).
inline Mat lyap_solve(const LyapunovProblem& prob) {
  detail::check_lyapunov_problem(prob);
  const Eigen::Index n = prob.B.rows();

  if (n == 1) {
    const double b = prob.B(0, 0);
    if (!(b > 0.0))
      throw LyapunovError("lyap_solve: B is not stable, min Re eigenvalue = " +
                          format_double(b) +
                          " (all eigenvalues of B must have positive real part)");
    Mat J(1, 1);
    J(0, 0) = prob.RHS(0, 0) / (2.0 * b);
    return J;
  }

  detail::checked_margin(prob, "lyap_solve");

  const Mat In = Mat::Identity(n, n);
  Mat K = Eigen::kroneckerProduct(In, prob.B).eval();
  K += Eigen::kroneckerProduct(prob.B, In).eval();
  Eigen::Map<const Vec> rhs(prob.RHS.data(), n * n);
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible())
    throw LyapunovError("lyap_solve: Kronecker system singular");
  Vec x = lu.solve(rhs);
  Mat J = Eigen::Map<Mat>(x.data(), n, n);
  J = 0.5 * (J + J.transpose()).eval();

  const double resid = (prob.B * J + J * prob.B.transpose() - prob.RHS).norm();
  const double tol = 1e-10 * std::max(1.0, prob.RHS.norm());
  if (!(resid <= tol))
    throw LyapunovError("lyap_solve: residual " + format_double(resid) +
                        " exceeds " + format_double(tol));
  return J;
}

namespace detail {

struct SimpsonState {
  const Mat* B;
  const Mat* RHS;
  long evals = 0;
  long budget = 200000;
  double worst_local_error = 0.0;
};

inline Mat lyap_integrand(SimpsonState& st, double y) {
  if (++st.evals > st.budget)
    throw QuadratureError(
        "lyap_quadrature: evaluation budget exhausted, worst local error " +
        format_double(st.worst_local_error));
  Mat E = (-y * (*st.B)).exp();
  return E * (*st.RHS) * E.transpose();
}

inline Mat simpson_recurse(SimpsonState& st, double a, double b, const Mat& fa,
                           const Mat& fm, const Mat& fb, const Mat& whole,
                           double tol, int depth) {
  const double m = 0.5 * (a + b);
  const Mat fl = lyap_integrand(st, 0.5 * (a + m));
  const Mat fr = lyap_integrand(st, 0.5 * (m + b));
  const Mat left = (m - a) / 6.0 * (fa + 4.0 * fl + fm);
  const Mat right = (b - m) / 6.0 * (fm + 4.0 * fr + fb);
  const double err = (left + right - whole).norm() / 15.0;
  if (err <= tol || depth >= 48) {
    st.worst_local_error = std::max(st.worst_local_error, err);
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson_recurse(st, a, m, fa, fl, fm, left, 0.5 * tol, depth + 1) +
         simpson_recurse(st, m, b, fm, fr, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace detail

// Independent oracle for lyap_solve: J = int_0^inf e^{-yB} RHS e^{-yB^T} dy,
// truncated where the integrand norm has decayed to tol and integrated with
// adaptive Simpson. Slow by design; used for cross-checks, never production.
inline Mat lyap_quadrature(const LyapunovProblem& prob, double tol = 1e-10) {
  detail::check_lyapunov_problem(prob);
  require(tol > 0.0, "lyap_quadrature: tol must be positive");
  const double margin = detail::checked_margin(prob, "lyap_quadrature");

  const double nrhs = prob.RHS.norm();
  const Eigen::Index n = prob.B.rows();
  if (nrhs == 0.0) return Mat::Zero(n, n);

  const double y_max =
      std::max(std::log(std::max(nrhs / tol, 2.0)) / (2.0 * margin), 1e-8);

  detail::SimpsonState st{&prob.B, &prob.RHS};
  const Mat fa = detail::lyap_integrand(st, 0.0);
  const Mat fb = detail::lyap_integrand(st, y_max);
  const Mat fm = detail::lyap_integrand(st, 0.5 * y_max);
  const Mat whole = y_max / 6.0 * (fa + 4.0 * fm + fb);
  Mat J = detail::simpson_recurse(st, 0.0, y_max, fa, fm, fb, whole, tol, 0);
  return 0.5 * (J + J.transpose()).eval();
}

}  // namespace smallmass
