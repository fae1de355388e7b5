#pragma once

// Shared helpers for the test suite: seeded random matrices with controlled
// spectra, and a couple of norms. All randomness is mt19937_64 with fixed
// seeds so every test is reproducible.

#include <random>

#include "smallmass/common.hpp"

namespace testutil {

using smallmass::Mat;
using smallmass::Vec;

inline Mat rand_mat(std::mt19937_64& rng, int r, int c, double lo = -1.0,
                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

inline Vec rand_vec(std::mt19937_64& rng, int n, double lo = -1.0,
                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

// M M^T + floor I: symmetric positive definite with smallest eigenvalue
// at least floor.
inline Mat rand_spd(std::mt19937_64& rng, int n, double floor = 0.1) {
  Mat m = rand_mat(rng, n, n);
  return m * m.transpose() + floor * Mat::Identity(n, n);
}

// SPD plus a skew part: the symmetric part stays positive definite, so all
// eigenvalues have positive real part (stable in the Lyapunov sense).
inline Mat rand_stable(std::mt19937_64& rng, int n, double floor = 0.1) {
  Mat s = rand_mat(rng, n, n);
  return rand_spd(rng, n, floor) + (s - s.transpose());
}

inline double frob(const Mat& m) { return m.norm(); }

inline double rel_err(const Mat& got, const Mat& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

inline double min_real_eig(const Mat& m) {
  if (m.rows() == 1) return m(0, 0);
  return Eigen::EigenSolver<Mat>(m, false).eigenvalues().real().minCoeff();
}

inline double max_real_eig(const Mat& m) {
  if (m.rows() == 1) return m(0, 0);
  return Eigen::EigenSolver<Mat>(m, false).eigenvalues().real().maxCoeff();
}

inline double min_sym_eig(const Mat& m) {
  const Mat s = 0.5 * (m + m.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat>(s).eigenvalues().minCoeff();
}

inline double max_sym_eig(const Mat& m) {
  const Mat s = 0.5 * (m + m.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat>(s).eigenvalues().maxCoeff();
}

inline double spectral_norm(const Mat& m) {
  return m.jacobiSvd().singularValues().maxCoeff();
}

}  // namespace testutil
