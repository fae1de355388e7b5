#pragma once

// Time grids, counter-based Gaussian noise, Euler-Maruyama steppers for the
// full (eps-dependent) and limiting dynamics, and the coupled integrator that
// drives both legs with the same Brownian increments. Noise is a pure function
// of (master_seed, path_index, step, component) via Philox4x32-10, so any path
// segment can be regenerated independently of execution order or thread count.

#include <array>
#include <atomic>
#include <cstring>
#include <mutex>
#include <ostream>
#include <thread>

#include "smallmass/homogenize.hpp"

namespace smallmass {

struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  std::int64_t steps = 1;

  void validate() const {
    require(T > t0, "grid: need T > t0");
    require(steps >= 1, "grid: need at least one step");
  }
  double dt() const { return (T - t0) / double(steps); }
  double time(std::int64_t i) const {
    return t0 + (T - t0) * (double(i) / double(steps));
  }
};

namespace detail {

// Philox4x32-10 (Salmon et al. counter-based RNG), pinned by known-answer
// tests. Returns four independent 32-bit words per (counter, key) pair.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t MA = 0xD2511F53u, MB = 0xCD9E8D57u;
  constexpr std::uint32_t WA = 0x9E3779B9u, WB = 0xBB67AE85u;
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = std::uint64_t(MA) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(MB) * ctr[2];
    const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    if (r < 9) {
      k0 += WA;
      k1 += WB;
    }
  }
  return ctr;
}

}  // namespace detail

// Unit normal, deterministic in all four coordinates. Box-Muller with a
// 53-bit uniform in (0,1] so the logarithm never sees zero.
inline double standard_normal(std::uint64_t master_seed, std::int64_t path_index,
                              std::int64_t step, int component) {
  require(step >= 0 && step < (std::int64_t(1) << 32),
          "noise: step index out of the 32-bit counter range");
  require(component >= 0, "noise: component must be >= 0");
  const std::array<std::uint32_t, 4> ctr = {
      std::uint32_t(std::uint64_t(path_index)),
      std::uint32_t(std::uint64_t(path_index) >> 32), std::uint32_t(step),
      std::uint32_t(component)};
  const std::array<std::uint32_t, 2> key = {std::uint32_t(master_seed),
                                            std::uint32_t(master_seed >> 32)};
  const auto r = detail::philox4x32(ctr, key);
  const std::uint64_t hi = (std::uint64_t(r[0]) << 32) | r[1];
  const double u1 = double((hi >> 11) + 1) * 0x1p-53;  // (0, 1]
  const double u2 = double(r[2]) * 0x1p-32;            // [0, 1)
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Lazy view of one path's Brownian increments on a grid; nothing is stored.
struct NoisePath {
  std::uint64_t master_seed = 0;
  std::int64_t path_index = 0;
  int k = 1;
  TimeGrid grid;

  double z(std::int64_t step, int component) const {
    return standard_normal(master_seed, path_index, step, component);
  }
  double dW(std::int64_t step, int component) const {
    return std::sqrt(grid.dt()) * z(step, component);
  }
  Mat increments() const {
    Mat W(grid.steps, k);
    for (std::int64_t i = 0; i < grid.steps; ++i)
      for (int c = 0; c < k; ++c) W(i, c) = dW(i, c);
    return W;
  }
};

enum class Scheme { ExplicitEM, SemiImplicitDrag };

namespace detail {

// States beyond this magnitude are counted as escaped even though they are
// still representable; squaring them in an observable would overflow and a
// legitimate trajectory never gets anywhere near it.
inline bool escaped(const Vec& v) {
  return v.size() > 0 && v.cwiseAbs().maxCoeff() > 1.0e150;
}

inline State explicit_em_step(const SystemSpec& s, double eps, const State& x,
                              double dt, const Vec& dW) {
  const Vec gp = grad_p_H(s, eps, x);
  const Vec gq = grad_q_H(s, eps, x);
  const Mat gam = eval_gamma(s, x.t, x.q);
  const Mat sig = eval_sigma(s, x.t, x.q, x.p);
  const Vec f = eval_F(s, x.t, x.q, x.p);
  State y;
  y.t = x.t + dt;
  y.q = x.q + dt * gp;
  y.p = x.p + dt * (-(gam * gp) - gq + f) + sig * dW;
  return y;
}

}  // namespace detail

// One step of the full dynamics. SemiImplicitDrag treats the stiff drag term
// implicitly; for the quadratic model the drag is linear in p so the update is
// a single linear solve:
//   (I + dt/(eps m) Gamma A) p+ = p + dt/(eps m) Gamma A psi
//                                  + dt (-grad_q H + F) + sigma dW
//   q+ = q + dt/(eps m) A (p+ - psi).
// Other kinetic models fall back to explicit sub-steps of length <= eps/20,
// splitting the increment uniformly so the step consumes the same dW.
inline State step_full(const SystemSpec& s, double eps, const State& x,
                       double dt, const Vec& dW, Scheme scheme) {
  require(eps > 0.0, "step_full: eps must be positive");
  require(dt > 0.0, "step_full: dt must be positive");
  ensure_size(dW, s.k, "dW");

  State y;
  if (scheme == Scheme::ExplicitEM) {
    y = detail::explicit_em_step(s, eps, x, dt, dW);
  } else if (s.kinetic.kind() == KineticKind::Quadratic) {
    const double c = dt / (eps * s.kinetic.mass());
    const Mat A = eval_A(s, x.t, x.q);
    const Mat GA = eval_gamma(s, x.t, x.q) * A;
    const Vec psi = eval_psi(s, x.t, x.q);
    const Vec gq = grad_q_H(s, eps, x);
    const Mat sig = eval_sigma(s, x.t, x.q, x.p);
    const Vec f = eval_F(s, x.t, x.q, x.p);
    const Mat M = Mat::Identity(s.n, s.n) + c * GA;
    const Vec rhs = x.p + c * (GA * psi) + dt * (f - gq) + sig * dW;
    y.t = x.t + dt;
    y.p = M.partialPivLu().solve(rhs);
    y.q = x.q + c * (A * (y.p - psi));
  } else {
    const std::int64_t nsub =
        std::max<std::int64_t>(1, (std::int64_t)std::ceil(dt / (eps / 20.0)));
    const double h = dt / double(nsub);
    const Vec dWs = dW / double(nsub);
    y = x;
    for (std::int64_t j = 0; j < nsub; ++j)
      y = detail::explicit_em_step(s, eps, y, h, dWs);
    y.t = x.t + dt;
  }
  if (!y.q.allFinite() || !y.p.allFinite() || detail::escaped(y.q) ||
      detail::escaped(y.p))
    throw BlowUpError("full", x.t, x.q, x.p);
  return y;
}

// One Euler-Maruyama step of the limiting SDE. The workspace variant reuses
// the DriftAssembly storage across steps.
inline Vec step_limit_ws(const SystemSpec& s, double t, const Vec& q, double dt,
                         const Vec& dW, bool include_noise_drift,
                         DriftAssembly& ws) {
  require(dt > 0.0, "step_limit: dt must be positive");
  ensure_size(dW, s.k, "dW");
  limiting_coeffs_into(s, t, q, ws);
  Vec qn = q + dt * ws.limiting_drift + ws.limiting_diffusion * dW;
  if (!include_noise_drift) qn -= dt * ws.S;
  if (!qn.allFinite() || detail::escaped(qn))
    throw BlowUpError("limit", t, q, Vec());
  return qn;
}

inline Vec step_limit(const SystemSpec& s, double t, const Vec& q, double dt,
                      const Vec& dW, bool include_noise_drift = true) {
  DriftAssembly ws;
  return step_limit_ws(s, t, q, dt, dW, include_noise_drift, ws);
}

struct PairOptions {
  Scheme scheme = Scheme::ExplicitEM;
  std::int64_t agg = 1;  // limit-leg step = agg fine steps, driven by summed dW
  bool include_noise_drift = true;
  bool run_full = true;
  bool run_limit = true;
};

// Drives the full dynamics on the fine grid and the limiting dynamics on the
// aggregated coarse grid with the summed increments of the same path.
// obs(coarse_index, t, x_full, q_limit) fires at every coarse node, including
// the initial one. Trajectory times are taken from the grid, not accumulated.
template <class Obs>
void integrate_pair_observe(const SystemSpec& s, double eps, const State& x0,
                            const Vec& q0_limit, const TimeGrid& grid,
                            const NoisePath& noise, const PairOptions& opt,
                            Obs&& obs) {
  check_spec(s);
  grid.validate();
  require(opt.agg >= 1 && grid.steps % opt.agg == 0,
          "integrate_pair: aggregation factor must divide the step count");
  require(noise.k == s.k, "integrate_pair: noise dimension mismatch");

  State x = x0;
  x.t = grid.time(0);
  Vec ql = q0_limit;
  DriftAssembly ws;
  Vec dW(s.k), dWsum(s.k);
  const double dt = grid.dt();

  obs(0, grid.time(0), x, ql);
  const std::int64_t n_coarse = grid.steps / opt.agg;
  for (std::int64_t c = 0; c < n_coarse; ++c) {
    dWsum.setZero();
    for (std::int64_t j = 0; j < opt.agg; ++j) {
      const std::int64_t i = c * opt.agg + j;
      for (int comp = 0; comp < s.k; ++comp) dW[comp] = noise.dW(i, comp);
      dWsum += dW;
      if (opt.run_full) {
        x = step_full(s, eps, x, dt, dW, opt.scheme);
        x.t = grid.time(i + 1);
      }
    }
    const double tc = grid.time(c * opt.agg);
    if (opt.run_limit)
      ql = step_limit_ws(s, tc, ql, grid.time((c + 1) * opt.agg) - tc, dWsum,
                         opt.include_noise_drift, ws);
    obs(c + 1, grid.time((c + 1) * opt.agg), x, ql);
  }
}

struct PairPath {
  std::vector<double> times;
  std::vector<State> full;  // at coarse nodes
  std::vector<Vec> limit;   // at coarse nodes
};

inline PairPath integrate_pair(const SystemSpec& s, double eps, const State& x0,
                               const Vec& q0_limit, const TimeGrid& grid,
                               const NoisePath& noise,
                               const PairOptions& opt = {}) {
  PairPath out;
  out.times.reserve(grid.steps / opt.agg + 1);
  integrate_pair_observe(s, eps, x0, q0_limit, grid, noise, opt,
                         [&](std::int64_t, double t, const State& x, const Vec& ql) {
                           out.times.push_back(t);
                           if (opt.run_full) out.full.push_back(x);
                           if (opt.run_limit) out.limit.push_back(ql);
                         });
  return out;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? int(hc) : 1;
}

// Fixed partition of paths into blocks, processed by a small thread pool.
// fn(block_index, path_begin, path_end) must write only to per-block storage;
// merging block results in index order afterwards makes every reduction
// independent of the worker count and of scheduling.
inline void parallel_blocks(
    std::int64_t n_paths, std::int64_t block_size, int threads,
    const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn) {
  require(n_paths >= 0 && block_size >= 1, "parallel_blocks: bad sizes");
  const std::int64_t n_blocks = (n_paths + block_size - 1) / block_size;
  const int workers =
      int(std::min<std::int64_t>(std::max(1, threads), std::max<std::int64_t>(n_blocks, 1)));

  if (workers == 1) {
    for (std::int64_t b = 0; b < n_blocks; ++b)
      fn(b, b * block_size, std::min(n_paths, (b + 1) * block_size));
    return;
  }

  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      try {
        for (;;) {
          const std::int64_t b = next.fetch_add(1);
          if (b >= n_blocks) return;
          fn(b, b * block_size, std::min(n_paths, (b + 1) * block_size));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// CSV trajectory output: full leg is t,q_1..q_n,p_1..p_n; limit leg is
// t,q_1..q_n. Long format prepends a path_index column.
inline void write_full_csv_header(std::ostream& os, int n, bool long_format) {
  if (long_format) os << "path_index,";
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",q_" << i;
  for (int i = 1; i <= n; ++i) os << ",p_" << i;
  os << "\n";
}

inline void write_limit_csv_header(std::ostream& os, int n, bool long_format) {
  if (long_format) os << "path_index,";
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",q_" << i;
  os << "\n";
}

inline void write_full_csv_rows(std::ostream& os, const PairPath& path,
                                std::int64_t path_index, bool long_format) {
  for (std::size_t r = 0; r < path.full.size(); ++r) {
    if (long_format) os << path_index << ",";
    os << format_double(path.times[r]);
    const State& x = path.full[r];
    for (Eigen::Index i = 0; i < x.q.size(); ++i)
      os << "," << format_double(x.q[i]);
    for (Eigen::Index i = 0; i < x.p.size(); ++i)
      os << "," << format_double(x.p[i]);
    os << "\n";
  }
}

inline void write_limit_csv_rows(std::ostream& os, const PairPath& path,
                                 std::int64_t path_index, bool long_format) {
  for (std::size_t r = 0; r < path.limit.size(); ++r) {
    if (long_format) os << path_index << ",";
    os << format_double(path.times[r]);
    for (Eigen::Index i = 0; i < path.limit[r].size(); ++i)
      os << "," << format_double(path.limit[r][i]);
    os << "\n";
  }
}

}  // namespace smallmass
