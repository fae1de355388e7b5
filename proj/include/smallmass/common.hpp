#pragma once

// Shared aliases, error types, and small numeric helpers.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace smallmass {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A user-supplied coefficient callable returned NaN/Inf or had the wrong shape.
struct EvaluationError : Error {
  std::string field;
  EvaluationError(std::string field_, const std::string& msg)
      : Error("evaluation: " + field_ + ": " + msg), field(std::move(field_)) {}
};

struct LinalgError : Error {
  using Error::Error;
};

struct SymmetryError : LinalgError {
  double asymmetry;
  SymmetryError(const std::string& msg, double asym)
      : LinalgError(msg), asymmetry(asym) {}
};

struct LyapunovError : LinalgError {
  using LinalgError::LinalgError;
};

struct QuadratureError : LinalgError {
  using LinalgError::LinalgError;
};

// Trajectory left the representable range; carries the last finite state.
struct BlowUpError : Error {
  double t;
  Vec q, p;
  std::string leg;  // "full" or "limit"
  BlowUpError(std::string leg_, double t_, Vec q_, Vec p_)
      : Error("blow-up in " + leg_ + " dynamics at t=" + std::to_string(t_)),
        t(t_), q(std::move(q_)), p(std::move(p_)), leg(std::move(leg_)) {}
};

struct ConfigError : Error {
  using Error::Error;
};

// Too many aborted paths for the ensemble statistics to mean anything.
struct ExperimentInvalid : Error {
  double aborted_fraction;
  ExperimentInvalid(const std::string& msg, double frac)
      : Error(msg), aborted_fraction(frac) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Central-difference step, scaled to the coordinate magnitude.
inline double fd_step(double x) {
  static const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  return std::max(1.0, std::abs(x)) * h0;
}

inline void ensure_finite(double v, const std::string& field) {
  if (!std::isfinite(v)) throw EvaluationError(field, "non-finite value");
}

template <class Derived>
inline void ensure_finite(const Eigen::MatrixBase<Derived>& m, const std::string& field) {
  if (!m.allFinite()) throw EvaluationError(field, "non-finite entries");
}

inline void ensure_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols,
                         const std::string& field) {
  if (m.rows() != rows || m.cols() != cols)
    throw EvaluationError(field, "expected " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + ", got " +
                                     std::to_string(m.rows()) + "x" +
                                     std::to_string(m.cols()));
}

inline void ensure_size(const Vec& v, Eigen::Index n, const std::string& field) {
  if (v.size() != n)
    throw EvaluationError(field, "expected size " + std::to_string(n) + ", got " +
                                     std::to_string(v.size()));
}

// Shortest round-trip decimal rendering, for deterministic artifacts.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// JSON has no inf/nan literals; non-finite values render as null.
inline std::string json_number(double v) {
  return std::isfinite(v) ? format_double(v) : std::string("null");
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if ((unsigned char)c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", (unsigned)c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

}  // namespace smallmass
