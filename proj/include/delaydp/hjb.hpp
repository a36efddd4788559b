#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "delaydp/convex.hpp"
#include "delaydp/grid.hpp"
#include "delaydp/model.hpp"
#include "delaydp/structural.hpp"
#include "delaydp/value.hpp"

namespace delaydp {

/// Finite-difference gradient of W_n at (t, x) in M2.
///
/// p1[m] is normalized by the quadrature weight with which x1[m] enters the
/// recursion, so sum_m w_m p1[m] dx1[m] approximates the directional
/// derivative. Nodes that cannot reach the horizon carry p1 = 0 exactly.
struct GradientEstimate {
  double p0 = 0.0;
  std::vector<double> p1;
  double compat = 0.0;
  bool one_sided = false;
  double bump = 0.0;
};

namespace detail {

/// Weight with which a unit bump of x1[m] moves the discrete forcing
/// integral: delta/2 for each Heun step on [t, T] that reads the node.
inline std::vector<double> forcing_weights(const Grid& g) {
  const int nr = g.n_r, nt = g.n_t;
  std::vector<double> w(g.history_size(), 0.0);
  for (int m = 0; m <= nr; ++m) {
    const int j = nr - m;
    int steps = 0;
    if (j < nt) ++steps;
    if (j >= 1 && j - 1 < nt) ++steps;
    w[m] = 0.5 * g.delta() * steps;
  }
  return w;
}

/// W_n at x, or nullopt when the solve ends infeasible.
inline std::optional<double> value_if_feasible(const ObjectiveSpec& spec, const M2Point& x,
                                               const SolverOptions& opt) {
  const auto r = solve_penalized(spec, x, opt);
  if (!std::isfinite(r.value)) throw SolverFailure("gradient: non-finite value");
  if (r.constraint_violation > opt.feasibility_tol) return std::nullopt;
  return r.value;
}

/// Difference quotient along direction v scaled by b; falls back to one side
/// when a bumped point is infeasible.
template <class Bump>
double directional(const ObjectiveSpec& spec, const M2Point& x, double b, Bump bump, const SolverOptions& opt,
                   bool& one_sided, std::optional<double>& centre) {
  auto plus = x, minus = x;
  bump(plus, b);
  bump(minus, -b);
  const auto vp = value_if_feasible(spec, plus, opt);
  const auto vm = value_if_feasible(spec, minus, opt);
  if (vp && vm) return (*vp - *vm) / (2.0 * b);
  if (!centre) {
    centre = value_if_feasible(spec, x, opt);
    if (!centre) throw SolverFailure("gradient: base point infeasible");
  }
  one_sided = true;
  if (vp) return (*vp - *centre) / b;
  if (vm) return (*centre - *vm) / b;
  throw SolverFailure("gradient: both bumped points infeasible");
}

}  // namespace detail

inline double default_bump(const ObjectiveSpec& spec, const M2Point& x) {
  return 1e-3 * (1.0 + norm(x, spec.grid.delta()));
}

inline SolverOptions gradient_solver_options() {
  SolverOptions o;
  o.tol = 1e-13;
  return o;
}

/// Central differences of solve_penalized values. `nodes` restricts which x1
/// entries are bumped (the rest stay 0); by default every node that reaches
/// the horizon.
inline GradientEstimate gradient_fd(const ObjectiveSpec& spec, const M2Point& x, std::optional<double> bump = {},
                                    std::optional<std::vector<int>> nodes = {},
                                    const SolverOptions& opt = gradient_solver_options()) {
  spec.validate();
  detail::check_x(spec, x);
  const auto& g = spec.grid;
  const double b = bump ? *bump : default_bump(spec, x);
  require(std::isfinite(b) && b > 0.0, "gradient: bump must be positive");

  GradientEstimate out;
  out.bump = b;
  out.p1.assign(g.history_size(), 0.0);
  std::optional<double> centre;
  bool one_sided = false;

  out.p0 = detail::directional(
      spec, x, b, [](M2Point& y, double s) { y.x0 += s; }, opt, one_sided, centre);

  const auto w = detail::forcing_weights(g);
  std::vector<int> which;
  if (nodes) {
    which = *nodes;
  } else {
    for (int m = 0; m <= g.n_r; ++m) which.push_back(m);
  }
  for (int m : which) {
    require(m >= 0 && m <= g.n_r, "gradient: node out of range");
    if (w[m] == 0.0) continue;
    const double d = detail::directional(
        spec, x, b, [m](M2Point& y, double s) { y.x1[m] += s; }, opt, one_sided, centre);
    out.p1[m] = d / w[m];
  }
  out.one_sided = one_sided;
  out.compat = std::abs(out.p0 - out.p1[g.n_r]);
  return out;
}

/// Segment read by the history functionals: p0 at theta = 0, p1 elsewhere.
inline std::vector<double> gradient_segment(const GradientEstimate& p) {
  auto seg = p.p1;
  seg.back() = p.p0;
  return seg;
}

/// Lp, the control functional applied to the gradient.
inline double control_pairing(const ObjectiveSpec& spec, const GradientEstimate& p) {
  return apply_history_functional(spec.model.control_functional(spec.grid), gradient_segment(p),
                                  spec.grid.delta());
}

/// <x, G p> = x0 * (state functional of p) + <x1, dp1/dtheta>, forward differences.
inline double generator_pairing(const ObjectiveSpec& spec, const M2Point& x, const GradientEstimate& p) {
  const auto& g = spec.grid;
  const double d = g.delta();
  const auto seg = gradient_segment(p);
  const double head = x.x0 * apply_history_functional(spec.model.state_functional(g), seg, d);
  std::vector<double> dp(seg.size());
  for (std::size_t m = 0; m + 1 < seg.size(); ++m) dp[m] = (p.p1[m + 1] - p.p1[m]) / d;
  dp.back() = (p.p1.back() - p.p1[p.p1.size() - 2]) / d;
  return head + trapezoid_dot(x.x1, dp, d);
}

/// |W_n(T, x) - phi(x0)|, from a solve on the degenerate grid at T.
inline double terminal_gap(const ObjectiveSpec& spec, const M2Point& x) {
  const auto& g = spec.grid;
  const auto at_T = spec.with_grid(Grid(g.horizon(), g.R, g.n_r, 0));
  return std::abs(solve_penalized(at_T, x).value - spec.terminal(x.x0));
}

struct HjbResidual {
  double residual = 0.0;
  double dt = 0.0;
  double pairing = 0.0;
  double hamiltonian = 0.0;
  GradientEstimate gradient;
  bool low_confidence = false;
};

/// |d_t W_n + <x, G p> - F_n(t, p)| at an interior point with x0 > 0;
/// d_t by a central difference over one grid step with x held fixed.
inline HjbResidual hjb_residual(const ObjectiveSpec& spec, const M2Point& x, std::optional<double> bump = {},
                                const SolverOptions& opt = gradient_solver_options()) {
  spec.validate();
  detail::check_x(spec, x);
  require(x.x0 > 0.0, "hjb: requires x0 > 0");
  const auto& g = spec.grid;
  require(g.n_t >= 1, "hjb: requires at least one step to the horizon");

  HjbResidual out;
  out.gradient = gradient_fd(spec, x, bump, {}, opt);
  const double ahead = solve_penalized(spec.with_grid(g.advanced(1)), x, opt).value;
  const double behind = solve_penalized(spec.with_grid(g.extended_back()), x, opt).value;
  out.dt = (ahead - behind) / (2.0 * g.delta());
  out.pairing = generator_pairing(spec, x, out.gradient);
  out.hamiltonian =
      hamiltonian(HamiltonianSpec{spec.running, spec.model.rho, spec.n}, g.t, control_pairing(spec, out.gradient));
  out.residual = std::abs(out.dt + out.pairing - out.hamiltonian);
  out.low_confidence = out.gradient.compat > 10.0 * out.gradient.bump;
  return out;
}

struct RolloutResult {
  double J_closed = 0.0;
  double W_n = 0.0;
  double gap = 0.0;
  ControlGrid control;
  std::vector<double> k;
};

/// Central difference of W_n at x along v, with step scaled so the bumped
/// points sit `bump` away in the M2 norm.
inline double directional_fd(const ObjectiveSpec& spec, const M2Point& x, const M2Point& v, double bump,
                             const SolverOptions& opt = gradient_solver_options()) {
  const double len = norm(v, spec.grid.delta());
  if (len == 0.0) return 0.0;
  const double s = bump / len;
  bool one_sided = false;
  std::optional<double> centre;
  return detail::directional(
      spec, x, s, [&v](M2Point& y, double t) { y += t * v; }, opt, one_sided, centre);
}

/// Closed loop from the feedback map. Step j reads the gradient of
/// W_n(t_{j+1}, .) along the one-step control direction B_j = y_{j+1}(1) -
/// y_{j+1}(0), so Lp = <p, B_j>/delta, and sets c_j by the n-regularized
/// Hamiltonian's maximizer. The gradient is taken at y_{j+1}(c_j) and c_j
/// iterated to a fixed point.
inline RolloutResult closed_loop_rollout(const ObjectiveSpec& spec, const M2Point& x, std::optional<double> bump = {},
                                         const SolverOptions& opt = gradient_solver_options()) {
  spec.validate();
  detail::check_x(spec, x);
  require(spec.n.has_value(), "rollout: requires finite n");
  const auto& g = spec.grid;
  const double d = g.delta();
  const HamiltonianSpec H{spec.running, spec.model.rho, spec.n};

  ControlGrid c{std::vector<double>(static_cast<std::size_t>(g.n_t), 0.0)};
  double guess = 0.0;
  for (int j = 0; j < g.n_t; ++j) {
    const auto next = spec.with_grid(g.advanced(j + 1));
    c.values[j] = 0.0;
    const M2Point y0 = structural_state_at(spec.model, g, x, c, j + 1);
    c.values[j] = 1.0;
    const M2Point B = structural_state_at(spec.model, g, x, c, j + 1) - y0;
    double cj = guess;
    for (int it = 0; it < 50; ++it) {
      const M2Point y = y0 + cj * B;
      const double b = bump ? *bump : default_bump(next, y);
      const double Lp = directional_fd(next, y, B, b, opt) / d;
      const auto f = feedback(H, g.time(j), Lp);
      if (!f || !std::isfinite(*f))
        throw SolverFailure("rollout: feedback unbounded at step " + std::to_string(j) +
                            " (Lp = " + std::to_string(Lp) + ")");
      const double step = std::abs(*f - cj);
      cj = *f;
      if (step <= 1e-12 * (1.0 + std::abs(cj))) break;
    }
    c.values[j] = cj;
    guess = cj;
  }

  RolloutResult out;
  out.control = c;
  out.k = detail::state_path(spec, x, c.values);
  out.J_closed = evaluate_J(spec, x, c);
  out.W_n = solve_penalized(spec, x, opt).value;
  out.gap = out.J_closed - out.W_n;
  return out;
}

}  // namespace delaydp
