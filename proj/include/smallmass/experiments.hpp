#pragma once

// Quantitative convergence experiments: strong position error between the
// coupled full and limiting dynamics, momentum boundary-layer decay, kinetic
// energy boundedness, and log-log rate fits. Ensemble reductions run over a
// fixed block partition of paths and merge per-block partials in index order,
// so reported numbers are bitwise independent of the worker count.

#include <iomanip>
#include <numeric>
#include <sstream>

#include "smallmass/sde.hpp"

namespace smallmass {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  int points = 0;
};

// OLS of ln(y) on ln(x); slope_stderr is the usual regression standard error.
inline RateFit fit_rate(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "fit_rate: size mismatch");
  require(x.size() >= 2, "fit_rate: need at least two points");
  const int m = (int)x.size();
  std::vector<double> lx(m), ly(m);
  for (int i = 0; i < m; ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "fit_rate: data must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / m;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  require(sxx > 0.0, "fit_rate: degenerate abscissae");
  RateFit f;
  f.points = m;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (m > 2) {
    double ssr = 0.0;
    for (int i = 0; i < m; ++i) {
      const double r = ly[i] - (f.intercept + f.slope * lx[i]);
      ssr += r * r;
    }
    f.slope_stderr = std::sqrt(ssr / double(m - 2) / sxx);
  }
  return f;
}

enum class ErrorMode { SupExpectation, ExpectationSup };

struct SweepOptions {
  double dt_divisor = 20.0;  // dt = eps / dt_divisor
  Scheme scheme = Scheme::ExplicitEM;
  bool include_noise_drift = true;
  std::int64_t agg = 1;
  std::uint64_t master_seed = 20260815;
  int threads = 0;  // 0 = hardware concurrency
  std::int64_t block_size = 256;
  double max_aborted_fraction = 0.01;
  double t0 = 0.0;
  Vec q0;  // empty = ones(n); p0 = psi(t0, q0)
};

struct ConvergenceReport {
  std::string target;  // "position-strong-error" or "momentum-decay"
  std::string mode;    // "sup-expectation" or "expectation-sup"
  double p = 2.0;
  double T = 1.0;
  std::string dt_rule;
  std::uint64_t master_seed = 0;
  std::int64_t n_paths = 0;
  std::vector<double> eps_list, errors, stderrs, aborted_fractions;
  double slope = 0.0, intercept = 0.0, slope_stderr = 0.0;
  double max_aborted_fraction = 0.0;
};

struct EnergyReport {
  double q_order = 1.0;
  double T = 1.0;
  std::string dt_rule;
  std::uint64_t master_seed = 0;
  std::int64_t n_paths = 0;
  std::vector<double> eps_list, sup_mean, stderrs, aborted_fractions;
  double max_over_min = 0.0;
};

namespace detail {

struct NodeStats {
  double sup_of_means = 0.0;
  std::int64_t sup_index = 0;
  double sem_at_sup = 0.0;
  double mean_of_sups = 0.0;
  double sem_of_sups = 0.0;
  std::int64_t accepted = 0;
  double aborted_fraction = 0.0;
};

// One ensemble at one eps. weight(x_full, q_limit, is_initial) is evaluated at
// every observed node; per-path node weights are committed to the block
// accumulators only if the path finishes, so aborted paths leave no trace.
template <class WeightFn>
NodeStats ensemble_node_stats(const SystemSpec& s, double eps,
                              const TimeGrid& grid, const PairOptions& popt,
                              std::int64_t n_paths, const SweepOptions& opts,
                              WeightFn&& weight) {
  grid.validate();
  require(n_paths >= 2, "ensemble: need at least two paths");
  const std::int64_t n_nodes = grid.steps / popt.agg + 1;
  const std::int64_t n_blocks =
      (n_paths + opts.block_size - 1) / opts.block_size;

  struct BlockAcc {
    std::vector<double> sum_w, sum_w2;
    double sum_sup = 0.0, sum_sup2 = 0.0;
    std::int64_t accepted = 0, aborted = 0;
  };
  std::vector<BlockAcc> acc(n_blocks);

  Vec q0 = opts.q0.size() ? opts.q0 : Vec::Ones(s.n);
  ensure_size(q0, s.n, "q0");
  State x0;
  x0.t = grid.t0;
  x0.q = q0;
  x0.p = eval_psi(s, grid.t0, q0);

  parallel_blocks(
      n_paths, opts.block_size, resolve_threads(opts.threads),
      [&](std::int64_t b, std::int64_t lo, std::int64_t hi) {
        BlockAcc& a = acc[b];
        a.sum_w.assign(n_nodes, 0.0);
        a.sum_w2.assign(n_nodes, 0.0);
        std::vector<double> w_path(n_nodes);
        for (std::int64_t path = lo; path < hi; ++path) {
          NoisePath noise{opts.master_seed, path, s.k, grid};
          double sup = 0.0;
          bool ok = true;
          try {
            integrate_pair_observe(
                s, eps, x0, q0, grid, noise, popt,
                [&](std::int64_t node, double tn, const State& xf, const Vec& ql) {
                  const double w = weight(xf, ql);
                  // an overflowing observable on a still-representable state
                  // is a blow-up in all but name
                  if (!std::isfinite(w)) throw BlowUpError("full", tn, xf.q, xf.p);
                  w_path[node] = w;
                  sup = std::max(sup, w);
                });
          } catch (const BlowUpError&) {
            ok = false;
          }
          if (!ok) {
            ++a.aborted;
            continue;
          }
          ++a.accepted;
          for (std::int64_t j = 0; j < n_nodes; ++j) {
            a.sum_w[j] += w_path[j];
            a.sum_w2[j] += w_path[j] * w_path[j];
          }
          a.sum_sup += sup;
          a.sum_sup2 += sup * sup;
        }
      });

  std::vector<double> sum_w(n_nodes, 0.0), sum_w2(n_nodes, 0.0);
  double sum_sup = 0.0, sum_sup2 = 0.0;
  std::int64_t accepted = 0, aborted = 0;
  for (const auto& a : acc) {
    for (std::int64_t j = 0; j < n_nodes; ++j) {
      sum_w[j] += a.sum_w[j];
      sum_w2[j] += a.sum_w2[j];
    }
    sum_sup += a.sum_sup;
    sum_sup2 += a.sum_sup2;
    accepted += a.accepted;
    aborted += a.aborted;
  }

  NodeStats st;
  st.accepted = accepted;
  st.aborted_fraction = double(aborted) / double(n_paths);
  if (accepted < 2) return st;  // caller rejects via aborted_fraction

  const double N = double(accepted);
  auto sem = [&](double sw, double sw2) {
    const double mean = sw / N;
    const double var = std::max(0.0, (sw2 - N * mean * mean) / (N - 1.0));
    return std::sqrt(var / N);
  };
  for (std::int64_t j = 0; j < n_nodes; ++j) {
    const double mean = sum_w[j] / N;
    if (j == 0 || mean > st.sup_of_means) {
      st.sup_of_means = mean;
      st.sup_index = j;
    }
  }
  st.sem_at_sup = sem(sum_w[st.sup_index], sum_w2[st.sup_index]);
  st.mean_of_sups = sum_sup / N;
  st.sem_of_sups = sem(sum_sup, sum_sup2);
  return st;
}

inline std::string dt_rule_string(double divisor) {
  return "eps/" + format_double(divisor);
}

inline TimeGrid grid_for(double eps, double T, double t0, double divisor) {
  const double dt = eps / divisor;
  const std::int64_t steps =
      std::max<std::int64_t>(1, (std::int64_t)std::llround(std::ceil(T / dt - 1e-9)));
  return TimeGrid{t0, t0 + T, steps};
}

inline void fit_report(ConvergenceReport& r) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < r.eps_list.size(); ++i)
    if (r.errors[i] > 0.0) {
      xs.push_back(r.eps_list[i]);
      ys.push_back(r.errors[i]);
    }
  if (xs.size() >= 2) {
    const RateFit f = fit_rate(xs, ys);
    r.slope = f.slope;
    r.intercept = f.intercept;
    r.slope_stderr = f.slope_stderr;
  } else {
    r.slope = r.intercept = r.slope_stderr =
        std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

// E-style strong error between the coupled legs:
//   SupExpectation: max over grid nodes of E ||q_eps - q_limit||^p
//   ExpectationSup: E of sup over grid nodes of ||q_eps - q_limit||^p
inline ConvergenceReport strong_error_sweep(const SystemSpec& s,
                                            const std::vector<double>& eps_list,
                                            double p, double T,
                                            std::int64_t n_paths, ErrorMode mode,
                                            const SweepOptions& opts = {}) {
  check_spec(s);
  require(!eps_list.empty(), "sweep: eps list must not be empty");
  require(p > 0.0 && T > 0.0, "sweep: need p > 0 and T > 0");

  ConvergenceReport r;
  r.target = "position-strong-error";
  r.mode = mode == ErrorMode::SupExpectation ? "sup-expectation" : "expectation-sup";
  r.p = p;
  r.T = T;
  r.dt_rule = detail::dt_rule_string(opts.dt_divisor);
  r.master_seed = opts.master_seed;
  r.n_paths = n_paths;

  for (double eps : eps_list) {
    require(eps > 0.0, "sweep: eps must be positive");
    const TimeGrid grid = detail::grid_for(eps, T, opts.t0, opts.dt_divisor);
    PairOptions popt;
    popt.scheme = opts.scheme;
    popt.agg = opts.agg;
    popt.include_noise_drift = opts.include_noise_drift;
    const bool p_is_2 = (p == 2.0);
    auto st = detail::ensemble_node_stats(
        s, eps, grid, popt, n_paths, opts,
        [&](const State& xf, const Vec& ql) {
          const double d2 = (xf.q - ql).squaredNorm();
          return p_is_2 ? d2 : std::pow(d2, 0.5 * p);
        });
    if (st.aborted_fraction > opts.max_aborted_fraction)
      throw ExperimentInvalid(
          "strong_error_sweep: aborted fraction " +
              format_double(st.aborted_fraction) + " at eps = " +
              format_double(eps) + " exceeds " +
              format_double(opts.max_aborted_fraction),
          st.aborted_fraction);
    r.eps_list.push_back(eps);
    r.errors.push_back(mode == ErrorMode::SupExpectation ? st.sup_of_means
                                                         : st.mean_of_sups);
    r.stderrs.push_back(mode == ErrorMode::SupExpectation ? st.sem_at_sup
                                                          : st.sem_of_sups);
    r.aborted_fractions.push_back(st.aborted_fraction);
    r.max_aborted_fraction =
        std::max(r.max_aborted_fraction, st.aborted_fraction);
  }
  detail::fit_report(r);
  return r;
}

// sup over the fine grid of E ||p - psi(t,q)||^p for the full dynamics alone.
inline ConvergenceReport momentum_decay_sweep(const SystemSpec& s,
                                              const std::vector<double>& eps_list,
                                              double p, double T,
                                              std::int64_t n_paths,
                                              const SweepOptions& opts = {}) {
  check_spec(s);
  require(!eps_list.empty(), "sweep: eps list must not be empty");
  require(p > 0.0 && T > 0.0, "sweep: need p > 0 and T > 0");

  ConvergenceReport r;
  r.target = "momentum-decay";
  r.mode = "sup-expectation";
  r.p = p;
  r.T = T;
  r.dt_rule = detail::dt_rule_string(opts.dt_divisor);
  r.master_seed = opts.master_seed;
  r.n_paths = n_paths;

  for (double eps : eps_list) {
    require(eps > 0.0, "sweep: eps must be positive");
    const TimeGrid grid = detail::grid_for(eps, T, opts.t0, opts.dt_divisor);
    PairOptions popt;
    popt.scheme = opts.scheme;
    popt.agg = 1;  // momentum is observed on every fine node
    popt.run_limit = false;
    const bool p_is_2 = (p == 2.0);
    auto st = detail::ensemble_node_stats(
        s, eps, grid, popt, n_paths, opts,
        [&](const State& xf, const Vec&) {
          const double d2 = (xf.p - eval_psi(s, xf.t, xf.q)).squaredNorm();
          return p_is_2 ? d2 : std::pow(d2, 0.5 * p);
        });
    if (st.aborted_fraction > opts.max_aborted_fraction)
      throw ExperimentInvalid(
          "momentum_decay_sweep: aborted fraction " +
              format_double(st.aborted_fraction) + " at eps = " +
              format_double(eps) + " exceeds " +
              format_double(opts.max_aborted_fraction),
          st.aborted_fraction);
    r.eps_list.push_back(eps);
    r.errors.push_back(st.sup_of_means);
    r.stderrs.push_back(st.sem_at_sup);
    r.aborted_fractions.push_back(st.aborted_fraction);
    r.max_aborted_fraction =
        std::max(r.max_aborted_fraction, st.aborted_fraction);
  }
  detail::fit_report(r);
  return r;
}

// sup over the fine grid of E [ K^q_order ] for the full dynamics; the
// quantity of interest is whether the sup stays bounded as eps shrinks.
inline EnergyReport energy_boundedness(const SystemSpec& s,
                                       const std::vector<double>& eps_list,
                                       double q_order, double T,
                                       std::int64_t n_paths,
                                       const SweepOptions& opts = {}) {
  check_spec(s);
  require(!eps_list.empty(), "sweep: eps list must not be empty");
  require(q_order > 0.0 && T > 0.0, "sweep: need q_order > 0 and T > 0");

  EnergyReport r;
  r.q_order = q_order;
  r.T = T;
  r.dt_rule = detail::dt_rule_string(opts.dt_divisor);
  r.master_seed = opts.master_seed;
  r.n_paths = n_paths;

  for (double eps : eps_list) {
    require(eps > 0.0, "sweep: eps must be positive");
    const TimeGrid grid = detail::grid_for(eps, T, opts.t0, opts.dt_divisor);
    PairOptions popt;
    popt.scheme = opts.scheme;
    popt.agg = 1;
    popt.run_limit = false;
    const bool q_is_1 = (q_order == 1.0);
    auto st = detail::ensemble_node_stats(
        s, eps, grid, popt, n_paths, opts,
        [&](const State& xf, const Vec&) {
          const double K = eval_kinetic(s, eps, xf);
          return q_is_1 ? K : std::pow(K, q_order);
        });
    if (st.aborted_fraction > opts.max_aborted_fraction)
      throw ExperimentInvalid(
          "energy_boundedness: aborted fraction " +
              format_double(st.aborted_fraction) + " at eps = " +
              format_double(eps) + " exceeds " +
              format_double(opts.max_aborted_fraction),
          st.aborted_fraction);
    r.eps_list.push_back(eps);
    r.sup_mean.push_back(st.sup_of_means);
    r.stderrs.push_back(st.sem_at_sup);
    r.aborted_fractions.push_back(st.aborted_fraction);
  }
  double lo = r.sup_mean[0], hi = r.sup_mean[0];
  for (double v : r.sup_mean) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  r.max_over_min = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  return r;
}

// --- serialization -----------------------------------------------------

namespace detail {

inline void json_array(std::ostream& os, const std::vector<double>& v) {
  os << "[";
  for (std::size_t i = 0; i < v.size(); ++i)
    os << (i ? ", " : "") << json_number(v[i]);
  os << "]";
}

}  // namespace detail

inline std::string to_json(const ConvergenceReport& r) {
  std::ostringstream os;
  os << "{\n  \"schema_version\": \"1\",\n";
  os << "  \"target\": \"" << r.target << "\",\n";
  os << "  \"mode\": \"" << r.mode << "\",\n";
  os << "  \"p\": " << json_number(r.p) << ",\n";
  os << "  \"T\": " << json_number(r.T) << ",\n";
  os << "  \"dt_rule\": \"" << r.dt_rule << "\",\n";
  os << "  \"master_seed\": " << r.master_seed << ",\n";
  os << "  \"n_paths\": " << r.n_paths << ",\n";
  os << "  \"eps\": ";
  detail::json_array(os, r.eps_list);
  os << ",\n  \"errors\": ";
  detail::json_array(os, r.errors);
  os << ",\n  \"stderrs\": ";
  detail::json_array(os, r.stderrs);
  os << ",\n  \"aborted_fractions\": ";
  detail::json_array(os, r.aborted_fractions);
  os << ",\n  \"slope\": " << json_number(r.slope);
  os << ",\n  \"intercept\": " << json_number(r.intercept);
  os << ",\n  \"slope_stderr\": " << json_number(r.slope_stderr);
  os << ",\n  \"max_aborted_fraction\": " << json_number(r.max_aborted_fraction);
  os << "\n}\n";
  return os.str();
}

inline std::string to_json(const EnergyReport& r) {
  std::ostringstream os;
  os << "{\n  \"schema_version\": \"1\",\n";
  os << "  \"target\": \"energy-boundedness\",\n";
  os << "  \"q_order\": " << json_number(r.q_order) << ",\n";
  os << "  \"T\": " << json_number(r.T) << ",\n";
  os << "  \"dt_rule\": \"" << r.dt_rule << "\",\n";
  os << "  \"master_seed\": " << r.master_seed << ",\n";
  os << "  \"n_paths\": " << r.n_paths << ",\n";
  os << "  \"eps\": ";
  detail::json_array(os, r.eps_list);
  os << ",\n  \"sup_mean\": ";
  detail::json_array(os, r.sup_mean);
  os << ",\n  \"stderrs\": ";
  detail::json_array(os, r.stderrs);
  os << ",\n  \"aborted_fractions\": ";
  detail::json_array(os, r.aborted_fractions);
  os << ",\n  \"max_over_min\": " << json_number(r.max_over_min);
  os << "\n}\n";
  return os.str();
}

inline void write_csv(std::ostream& os, const ConvergenceReport& r) {
  os << "eps,error,stderr\n";
  for (std::size_t i = 0; i < r.eps_list.size(); ++i)
    os << format_double(r.eps_list[i]) << "," << format_double(r.errors[i])
       << "," << format_double(r.stderrs[i]) << "\n";
}

inline void write_csv(std::ostream& os, const EnergyReport& r) {
  os << "eps,sup_mean,stderr\n";
  for (std::size_t i = 0; i < r.eps_list.size(); ++i)
    os << format_double(r.eps_list[i]) << "," << format_double(r.sup_mean[i])
       << "," << format_double(r.stderrs[i]) << "\n";
}

}  // namespace smallmass
