#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "delaydp/grid.hpp"

namespace delaydp {

/// Continuous linear functional on histories over [-R, 0]:
///   f(phi) = c0 * phi(0) + cR * phi(-R) + int density(theta) phi(theta) dtheta
/// with the density sampled on the n_r + 1 history nodes.
struct HistoryFunctional {
  double c0 = 0.0;
  double cR = 0.0;
  std::vector<double> density;

  /// phi(0) - phi(-R).
  static HistoryFunctional two_point(std::size_t samples) {
    return {1.0, -1.0, std::vector<double>(samples, 0.0)};
  }

  HistoryFunctional scaled(double s) const {
    HistoryFunctional out = *this;
    out.c0 *= s;
    out.cR *= s;
    for (double& d : out.density) d *= s;
    return out;
  }

  void validate(std::size_t samples) const {
    require(density.size() == samples, "history functional: density length mismatch");
    require(std::isfinite(c0) && std::isfinite(cR), "history functional: non-finite coefficient");
    require_finite(density, "history functional density");
  }

  /// Quadrature weights on the n_r + 1 window nodes; index 0 is theta = -R.
  std::vector<double> window_weights(double delta) const {
    std::vector<double> w = trapezoid_weights(density.size(), delta);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= density[i];
    w.front() += cR;
    w.back() += c0;
    return w;
  }

  bool has_density() const {
    return std::any_of(density.begin(), density.end(), [](double d) { return d != 0.0; });
  }
};

/// c0 * segment(0) + cR * segment(-R) + trapezoid quadrature of density * segment.
inline double apply_history_functional(const HistoryFunctional& f, std::span<const double> segment,
                                       double delta) {
  require(segment.size() == f.density.size(), "apply_history_functional: length mismatch");
  require(segment.size() >= 2, "apply_history_functional: need at least two samples");
  return f.c0 * segment.back() + f.cR * segment.front() + trapezoid_dot(f.density, segment, delta);
}

/// Density on [-R, 0] stored on its own uniform grid and resampled by linear
/// interpolation. A single sample means a constant density.
struct SampledDensity {
  std::vector<double> samples{0.0};

  SampledDensity() = default;
  explicit SampledDensity(double constant) : samples{constant} {}
  explicit SampledDensity(std::vector<double> s) : samples(std::move(s)) {
    require(!samples.empty(), "density: empty sample list");
  }

  double at(double theta, double R) const {
    if (samples.size() == 1) return samples.front();
    const double x = std::clamp((theta + R) / R, 0.0, 1.0) * static_cast<double>(samples.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(x), samples.size() - 2);
    const double frac = x - static_cast<double>(i);
    return (1.0 - frac) * samples[i] + frac * samples[i + 1];
  }

  std::vector<double> on(const Grid& g) const {
    std::vector<double> out(g.history_size());
    for (int m = 0; m <= g.n_r; ++m) out[m] = at(g.theta(m), g.R);
    return out;
  }

  bool nonnegative() const {
    return std::all_of(samples.begin(), samples.end(), [](double v) { return v >= 0.0; });
  }
};

enum class ModelKind { AK, Advertising };

/// Linear controlled DDE of either model:
///   AK:           k'(s) = a k(s) - a k(s-R) - c(s) + c(s-R)
///   Advertising:  g'(s) = a0 g(s) + int a1 g(s+.) + b0 z(s) + int b1 z(s+.)
struct ModelSpec {
  ModelKind kind = ModelKind::AK;
  double a = 0.3;
  double R = 1.0;
  double rho = 0.0;
  double a0 = 0.0;
  SampledDensity a1;
  double b0 = 0.0;
  SampledDensity b1;

  static ModelSpec ak(double a, double R, double rho = 0.0) {
    ModelSpec m;
    m.kind = ModelKind::AK;
    m.a = a;
    m.R = R;
    m.rho = rho;
    m.validate();
    return m;
  }

  static ModelSpec advertising(double a0, SampledDensity a1, double b0, SampledDensity b1, double R,
                               double rho = 0.0) {
    ModelSpec m;
    m.kind = ModelKind::Advertising;
    m.a0 = a0;
    m.a1 = std::move(a1);
    m.b0 = b0;
    m.b1 = std::move(b1);
    m.R = R;
    m.rho = rho;
    m.validate();
    return m;
  }

  void validate() const {
    require(std::isfinite(R) && R > 0.0, "model: R must be positive");
    require(std::isfinite(rho) && rho >= 0.0, "model: rho must be >= 0");
    if (kind == ModelKind::AK) {
      require(std::isfinite(a) && a > 0.0, "model: AK requires a > 0");
    } else {
      require(std::isfinite(a0) && a0 <= 0.0, "model: advertising requires a0 <= 0");
      require(std::isfinite(b0) && b0 >= 0.0, "model: advertising requires b0 >= 0");
      require(b1.nonnegative(), "model: advertising requires b1 >= 0");
      require_finite(a1.samples, "model a1");
      require_finite(b1.samples, "model b1");
    }
  }

  void check_grid(const Grid& g) const {
    g.validate();
    require(std::abs(g.R - R) <= 1e-12 * R, "grid: delay differs from the model's R");
  }

  /// Functional acting on the state history (a L for AK, N for advertising).
  HistoryFunctional state_functional(const Grid& g) const {
    if (kind == ModelKind::AK) return HistoryFunctional::two_point(g.history_size()).scaled(a);
    return {a0, 0.0, a1.on(g)};
  }

  /// Functional acting on the control history (-L for AK, B for advertising).
  HistoryFunctional control_functional(const Grid& g) const {
    if (kind == ModelKind::AK) return HistoryFunctional::two_point(g.history_size()).scaled(-1.0);
    return {b0, 0.0, b1.on(g)};
  }
};

/// Initial datum (phi0, phi1, omega): current state, state history and control
/// history on the n_r + 1 nodes of [-R, 0].
struct InitialTriple {
  double phi0 = 0.0;
  std::vector<double> phi1;
  std::vector<double> omega;

  static InitialTriple constant(const Grid& g, double state, double control) {
    return {state, std::vector<double>(g.history_size(), state),
            std::vector<double>(g.history_size(), control)};
  }

  void validate(const ModelSpec& m, const Grid& g) const {
    require(phi1.size() == g.history_size(), "initial triple: phi1 has wrong sample count");
    require(omega.size() == g.history_size(), "initial triple: omega has wrong sample count");
    require(std::isfinite(phi0), "initial triple: phi0 non-finite");
    require_finite(phi1, "initial triple phi1");
    require_finite(omega, "initial triple omega");
    if (m.kind == ModelKind::Advertising) {
      require(std::all_of(phi1.begin(), phi1.end(), [](double v) { return v >= 0.0; }),
              "initial triple: advertising requires theta >= 0");
      require(std::all_of(omega.begin(), omega.end(), [](double v) { return v >= 0.0; }),
              "initial triple: advertising requires delta >= 0");
      require(std::abs(phi1.back() - phi0) <= 1e-12 * std::max(1.0, std::abs(phi0)),
              "initial triple: advertising requires theta(0) = x");
    }
  }
};

/// Piecewise-constant control: values[j] holds on [t + j delta, t + (j+1) delta).
struct ControlGrid {
  std::vector<double> values;

  static ControlGrid constant(const Grid& g, double v) {
    return {std::vector<double>(static_cast<std::size_t>(g.n_t), v)};
  }

  void validate(const Grid& g) const {
    require(values.size() == static_cast<std::size_t>(g.n_t), "control: wrong number of steps");
    require_finite(values, "control");
  }

  bool admissible() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0; });
  }
};

}  // namespace delaydp
