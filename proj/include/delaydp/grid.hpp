#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace delaydp {

/// Raised for malformed inputs: mismatched sample counts, non-finite data,
/// grids that are not aligned to the delay.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative solve fails in a way the caller cannot recover from.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + ": non-finite sample");
}

/// Uniform time grid aligned to the delay: the step divides R exactly, so
/// every lookup at s - R lands on a node.
///
/// Node j of the forward part sits at t + j*delta, j = 0..n_t. Histories live
/// on the n_r + 1 nodes of [-R, 0] (index 0 is -R, index n_r is 0).
struct Grid {
  double t = 0.0;
  double R = 1.0;
  int n_r = 20;
  int n_t = 40;

  Grid() = default;
  Grid(double t0, double delay, int nodes_per_delay, int steps)
      : t(t0), R(delay), n_r(nodes_per_delay), n_t(steps) {
    validate();
  }

  /// Grid on [t, T] with n_r steps per delay; fails unless (T - t)/delta is an
  /// integer up to one rounding unit.
  static Grid from_horizon(double t0, double T, double delay, int nodes_per_delay) {
    require(delay > 0.0, "grid: R must be positive");
    require(nodes_per_delay >= 2, "grid: n_r must be >= 2");
    const double d = delay / nodes_per_delay;
    const double steps = (T - t0) / d;
    const double rounded = std::round(steps);
    require(T >= t0, "grid: T must not precede t");
    require(std::abs(steps - rounded) <= 1e-9 * std::max(1.0, steps),
            "grid: delta does not divide T - t");
    return Grid(t0, delay, nodes_per_delay, static_cast<int>(rounded));
  }

  void validate() const {
    require(std::isfinite(t), "grid: t must be finite");
    require(std::isfinite(R) && R > 0.0, "grid: R must be positive");
    require(n_r >= 2, "grid: n_r must be >= 2");
    require(n_t >= 0, "grid: n_t must be >= 0");
  }

  double delta() const { return R / n_r; }
  double horizon() const { return t + n_t * delta(); }
  double time(int j) const { return t + j * delta(); }
  std::size_t history_size() const { return static_cast<std::size_t>(n_r) + 1; }
  std::size_t forward_size() const { return static_cast<std::size_t>(n_t) + 1; }
  /// Samples of a full path on [t - R, T].
  std::size_t path_size() const { return static_cast<std::size_t>(n_r + n_t) + 1; }

  /// History coordinate theta of node m.
  double theta(int m) const { return -R + m * delta(); }

  /// Same delay and step, starting `steps` nodes later.
  Grid advanced(int steps) const {
    require(steps >= 0 && steps <= n_t, "grid: cannot advance past the horizon");
    return Grid(time(steps), R, n_r, n_t - steps);
  }

  /// Same delay and horizon, starting one step earlier.
  Grid extended_back() const { return Grid(time(-1), R, n_r, n_t + 1); }

  /// Index j with time(j) == s, or throws when s is off-grid or outside [t, T].
  int node_index(double s) const {
    const double d = delta();
    const double x = (s - t) / d;
    const double r = std::round(x);
    require(std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x)), "grid: time is not a grid node");
    require(r >= 0 && r <= n_t, "grid: time outside [t, T]");
    return static_cast<int>(r);
  }
};

/// Composite trapezoid weights for n + 1 equispaced samples of step h.
inline std::vector<double> trapezoid_weights(std::size_t samples, double h) {
  std::vector<double> w(samples, h);
  if (samples == 0) return w;
  if (samples == 1) {
    w[0] = 0.0;
    return w;
  }
  w.front() = 0.5 * h;
  w.back() = 0.5 * h;
  return w;
}

inline double trapezoid_dot(std::span<const double> f, std::span<const double> g, double h) {
  require(f.size() == g.size(), "trapezoid: length mismatch");
  if (f.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double wi = (i == 0 || i + 1 == f.size()) ? 0.5 : 1.0;
    s += wi * f[i] * g[i];
  }
  return s * h;
}

inline double trapezoid_norm(std::span<const double> f, double h) {
  return std::sqrt(std::max(0.0, trapezoid_dot(f, f, h)));
}

}  // namespace delaydp
