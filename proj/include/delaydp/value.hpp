#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "delaydp/convex.hpp"
#include "delaydp/dde.hpp"
#include "delaydp/grid.hpp"
#include "delaydp/model.hpp"
#include "delaydp/structural.hpp"

namespace delaydp {

enum class ConstraintMode { Penalty, Reject };

/// Discretized minimization problem
///   J_n(t, x, c) = sum_k delta e^{-rho s_k} [h(c_k) + |c_k|^2/(2n)] + g(k) + phi(k(T))
/// with g the indicator of k >= 0.
struct ObjectiveSpec {
  ModelSpec model;
  Grid grid;
  std::optional<double> n;
  ConstraintMode mode = ConstraintMode::Penalty;
  std::vector<double> beta_schedule{1e1, 1e2, 1e3, 1e4, 1e5, 1e6};
  ConvexScalarFn running = ConvexScalarFn::crra(2.0);
  ConvexScalarFn terminal = ConvexScalarFn::linear(-1.0);
  bool state_constraint = true;

  void validate() const {
    model.validate();
    model.check_grid(grid);
    if (n) require(std::isfinite(*n) && *n >= 1.0, "objective: n must be >= 1");
    require(!beta_schedule.empty(), "objective: empty beta schedule");
    for (std::size_t i = 0; i < beta_schedule.size(); ++i) {
      require(std::isfinite(beta_schedule[i]) && beta_schedule[i] > 0.0, "objective: beta must be positive");
      if (i > 0) require(beta_schedule[i] > beta_schedule[i - 1], "objective: beta schedule must increase");
    }
    const auto tt = terminal.tag;
    require(tt == ConvexTag::Quadratic || tt == ConvexTag::Linear ||
                (tt == ConvexTag::Custom && std::isinf(terminal.lo) && std::isinf(terminal.hi)),
            "objective: terminal cost must be finite on R (quadratic, linear or custom)");
  }

  ObjectiveSpec with_n(std::optional<double> m) const {
    ObjectiveSpec out = *this;
    out.n = m;
    return out;
  }

  ObjectiveSpec with_grid(const Grid& g) const {
    ObjectiveSpec out = *this;
    out.grid = g;
    return out;
  }

  /// Weight delta e^{-rho s_k} of the running cost on step k.
  double weight(int k) const { return grid.delta() * std::exp(-model.rho * grid.time(k)); }
};

struct SolverOptions {
  double tol = 1e-9;
  int max_iter = 200000;
  double feasibility_tol = 1e-6;
};

struct SolveResult {
  double value = 0.0;
  ControlGrid control;
  std::vector<double> k;
  double constraint_violation = 0.0;
  int iterations = 0;
  bool converged = false;
  double gap_estimate = 0.0;
  double beta = 0.0;
};

namespace detail {

inline std::vector<double> state_path(const ObjectiveSpec& spec, const M2Point& x, std::span<const double> c) {
  const DelayRecursion rec(spec.model, spec.grid);
  const std::vector<double> zeros(spec.grid.history_size(), 0.0);
  return rec.forward(x.x0, zeros, zeros, x.x1, c).k;
}

inline double min_state(std::span<const double> k) { return *std::min_element(k.begin(), k.end()); }

inline void check_x(const ObjectiveSpec& spec, const M2Point& x) {
  require(x.x1.size() == spec.grid.history_size(), "objective: x1 has wrong sample count");
  require(std::isfinite(x.x0), "objective: x0 non-finite");
  require_finite(x.x1, "objective x1");
}

}  // namespace detail

/// Rectangle-rule J (or J_n when spec.n is set). +inf for negative controls,
/// and in Reject mode for any negative state sample. In Penalty mode the state
/// constraint is left to the solver and not part of the value.
inline double evaluate_J(const ObjectiveSpec& spec, const M2Point& x, const ControlGrid& control) {
  spec.validate();
  control.validate(spec.grid);
  detail::check_x(spec, x);
  double J = 0.0;
  for (int k = 0; k < spec.grid.n_t; ++k) {
    const double c = control.values[k];
    if (c < 0.0) return kInf;
    const double h = spec.running(c);
    if (!std::isfinite(h)) return kInf;
    J += spec.weight(k) * (h + (spec.n ? c * c / (2.0 * *spec.n) : 0.0));
  }
  const auto k = detail::state_path(spec, x, control.values);
  if (spec.state_constraint && spec.mode == ConstraintMode::Reject && detail::min_state(k) < 0.0) return kInf;
  return J + spec.terminal(k.back());
}

inline double evaluate_J(const ObjectiveSpec& spec, const InitialTriple& init, const ControlGrid& control) {
  return evaluate_J(spec, build_x1(spec.model, spec.grid, init), control);
}

/// Smooth part of the penalized objective, beta sum_{j>=1} delta max(0, -k_j)^2 + phi(k_N),
/// and its gradient in the controls by the reverse sweep of the recursion.
struct SmoothEval {
  double value = 0.0;
  std::vector<double> gradient;
  std::vector<double> k;
};

inline SmoothEval smooth_part(const ObjectiveSpec& spec, const M2Point& x, std::span<const double> c, double beta) {
  const auto& g = spec.grid;
  const detail::DelayRecursion rec(spec.model, g);
  const std::vector<double> zeros(g.history_size(), 0.0);
  SmoothEval out;
  out.k = rec.forward(x.x0, zeros, zeros, x.x1, c).k;
  std::vector<double> seeds(g.forward_size(), 0.0);
  const double d = g.delta();
  if (spec.state_constraint) {
    for (int j = 1; j <= g.n_t; ++j) {
      const double v = std::max(0.0, -out.k[j]);
      out.value += beta * d * v * v;
      seeds[j] = -2.0 * beta * d * v;
    }
  }
  const double kT = out.k.back();
  out.value += spec.terminal(kT);
  const auto sg = spec.terminal.subgradient(kT);
  seeds.back() += 0.5 * (sg.first + sg.second);
  out.gradient = rec.backward(seeds).d_control;
  return out;
}

namespace detail {

/// Separable part sum_k w_k [h(c_k) + c_k^2/(2n)] + indicator(c >= 0).
inline double separable_value(const ObjectiveSpec& spec, std::span<const double> c) {
  double v = 0.0;
  for (int k = 0; k < spec.grid.n_t; ++k) {
    if (c[k] < 0.0) return kInf;
    v += spec.weight(k) * (spec.running(c[k]) + c[k] * c[k] / (2.0 * *spec.n));
  }
  return v;
}

/// argmin_c w_k [h(c) + c^2/(2n)] + L/2 (c - v)^2 over c >= 0.
inline void separable_prox(const ObjectiveSpec& spec, double L, std::span<const double> v, std::span<double> out) {
  const double n = *spec.n;
  for (int k = 0; k < spec.grid.n_t; ++k) {
    const double w = spec.weight(k);
    const double A = L + w / n;
    out[k] = std::max(0.0, prox(spec.running, A / w, L * v[k] / A));
  }
}

/// Largest eigenvalue of the curvature of the smooth part (power iteration on
/// the linear control-to-state map), used as the initial step bound.
inline double curvature_bound(const ObjectiveSpec& spec, double beta) {
  const auto& g = spec.grid;
  const DelayRecursion rec(spec.model, g);
  const std::vector<double> zeros(g.history_size(), 0.0);
  double qT = 0.0;
  if (spec.terminal.tag == ConvexTag::Quadratic) qT = spec.terminal.q;
  std::vector<double> v(static_cast<std::size_t>(g.n_t), 1.0);
  double lambda = 1.0;
  for (int it = 0; it < 30; ++it) {
    double nv = 0.0;
    for (double e : v) nv += e * e;
    nv = std::sqrt(nv);
    if (nv == 0.0) break;
    for (double& e : v) e /= nv;
    const auto k = rec.forward(0.0, zeros, zeros, {}, v).k;
    std::vector<double> seeds(g.forward_size(), 0.0);
    for (int j = 1; j <= g.n_t; ++j) seeds[j] = (spec.state_constraint ? 2.0 * beta * g.delta() : 0.0) * k[j];
    seeds.back() += qT * k.back();
    v = rec.backward(seeds).d_control;
    lambda = 0.0;
    for (double e : v) lambda += e * e;
    lambda = std::sqrt(lambda);
  }
  return std::max(lambda, 1e-8);
}

struct InnerResult {
  std::vector<double> c;
  double value = kInf;
  double gap = kInf;
  int iterations = 0;
  bool converged = false;
};

/// Accelerated proximal gradient with backtracking and adaptive restart for
/// one penalty weight.
inline InnerResult fista(const ObjectiveSpec& spec, const M2Point& x, std::vector<double> c0, double beta,
                         const SolverOptions& opt) {
  const int N = spec.grid.n_t;
  const double n = *spec.n;
  double L = curvature_bound(spec, beta);
  std::vector<double> c = std::move(c0), y = c, c_next(N), step(N), y_grad_step(N);
  double theta = 1.0;
  InnerResult res;

  auto full_value = [&](std::span<const double> z) {
    return smooth_part(spec, x, z, beta).value + separable_value(spec, z);
  };
  // Certified suboptimality bound at the prox point c+ of c.
  auto certify = [&](const std::vector<double>& z, double Lz, std::vector<double>& zplus) {
    const auto sz = smooth_part(spec, x, z, beta);
    for (int k = 0; k < N; ++k) step[k] = z[k] - sz.gradient[k] / Lz;
    separable_prox(spec, Lz, step, zplus);
    const auto sp = smooth_part(spec, x, zplus, beta);
    double gap = 0.0;
    for (int k = 0; k < N; ++k) {
      const double gk = sp.gradient[k] - sz.gradient[k] + Lz * (z[k] - zplus[k]);
      gap += gk * gk * n / (2.0 * spec.weight(k));
    }
    return gap;
  };

  std::vector<double> probe(N);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const auto sy = smooth_part(spec, x, y, beta);
    for (;;) {
      for (int k = 0; k < N; ++k) step[k] = y[k] - sy.gradient[k] / L;
      separable_prox(spec, L, step, c_next);
      const double s_next = smooth_part(spec, x, c_next, beta).value;
      double lin = sy.value, quad = 0.0;
      for (int k = 0; k < N; ++k) {
        const double dk = c_next[k] - y[k];
        lin += sy.gradient[k] * dk;
        quad += dk * dk;
      }
      if (s_next <= lin + 0.5 * L * quad + 1e-14 * (1.0 + std::abs(sy.value))) break;
      L *= 2.0;
      if (L > 1e30) throw SolverFailure("solver: step size collapsed");
    }
    double max_abs = 0.0;
    for (double v : c_next) max_abs = std::max(max_abs, std::abs(v));
    if (!std::isfinite(max_abs) || max_abs > 1e12) throw SolverFailure("solver: objective unbounded below (ill-posed objective)");

    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    double restart = 0.0;
    for (int k = 0; k < N; ++k) restart += (y[k] - c_next[k]) * (c_next[k] - c[k]);
    if (restart > 0.0) {
      y = c_next;
      theta = 1.0;
    } else {
      const double mom = (theta - 1.0) / theta_next;
      for (int k = 0; k < N; ++k) y[k] = c_next[k] + mom * (c_next[k] - c[k]);
      theta = theta_next;
    }
    c.swap(c_next);
    res.iterations = it;

    if (it % 10 == 0 || it == opt.max_iter) {
      const double gap = certify(c, L, probe);
      if (gap < res.gap) {
        res.gap = gap;
        res.c = probe;
      }
      if (gap <= opt.tol) {
        res.converged = true;
        break;
      }
    }
    L *= 0.95;
  }
  if (res.c.empty()) res.c = c;
  res.value = full_value(res.c);
  return res;
}

}  // namespace detail

/// W_n(t, x): minimizes the discretized J_n over c >= 0, escalating the state
/// penalty along the beta schedule until the state path is feasible.
inline SolveResult solve_penalized(const ObjectiveSpec& spec, const M2Point& x, const SolverOptions& opt = {}) {
  spec.validate();
  require(spec.n.has_value(), "solve_penalized: requires finite n");
  detail::check_x(spec, x);
  const auto& g = spec.grid;
  SolveResult out;
  if (g.n_t == 0) {
    out.value = spec.terminal(x.x0);
    out.k = {x.x0};
    out.constraint_violation = spec.state_constraint ? std::max(0.0, -x.x0) : 0.0;
    out.converged = out.constraint_violation <= opt.feasibility_tol;
    out.beta = spec.beta_schedule.front();
    return out;
  }
  const double horizon = g.horizon() - g.t;
  const double start = x.x0 > 0.0 ? 0.1 * x.x0 / horizon : 0.1;
  std::vector<double> c(static_cast<std::size_t>(g.n_t), start);
  int total = 0;
  for (double beta : spec.beta_schedule) {
    auto inner = detail::fista(spec, x, c, beta, opt);
    total += inner.iterations;
    c = inner.c;
    const auto k = detail::state_path(spec, x, c);
    const double viol = spec.state_constraint ? std::max(0.0, -detail::min_state(k)) : 0.0;
    out.value = inner.value;
    out.control = ControlGrid{c};
    out.k = k;
    out.constraint_violation = viol;
    out.gap_estimate = inner.gap;
    out.beta = beta;
    out.converged = inner.converged && viol <= opt.feasibility_tol;
    if (viol <= opt.feasibility_tol) break;
  }
  out.iterations = total;
  return out;
}

inline SolveResult solve_penalized(const ObjectiveSpec& spec, const InitialTriple& init,
                                   const SolverOptions& opt = {}) {
  return solve_penalized(spec, build_x1(spec.model, spec.grid, init), opt);
}

struct ValueTable {
  std::vector<double> n;
  std::vector<SolveResult> results;
  /// W_{n_i} - W_{n_{i+1}}.
  std::vector<double> differences;
  double W = 0.0;
  bool monotone = true;
  bool all_converged = true;
};

/// W_n over an increasing list of indices; W is reported as the last W_n.
inline ValueTable value_W(const ObjectiveSpec& spec, const M2Point& x, std::span<const double> n_list,
                          const SolverOptions& opt = {}) {
  require(!n_list.empty(), "value_W: empty n list");
  ValueTable tab;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (i > 0) require(n_list[i] > n_list[i - 1], "value_W: n list must increase");
    tab.n.push_back(n_list[i]);
    tab.results.push_back(solve_penalized(spec.with_n(n_list[i]), x, opt));
    tab.all_converged = tab.all_converged && tab.results.back().converged;
    if (i > 0) {
      const double diff = tab.results[i - 1].value - tab.results[i].value;
      tab.differences.push_back(diff);
      if (diff < -10.0 * opt.tol) tab.monotone = false;
    }
  }
  tab.W = tab.results.back().value;
  return tab;
}

/// Exhaustive minimum of J_n over controls with values in `levels`; controls
/// producing a negative state sample are skipped when the state constraint is on.
inline double dp_oracle(const ObjectiveSpec& spec, const M2Point& x, std::span<const double> levels) {
  spec.validate();
  detail::check_x(spec, x);
  const int N = spec.grid.n_t;
  require(!levels.empty(), "dp_oracle: empty level set");
  require(N <= 6, "dp_oracle: at most 6 steps");
  double count = std::pow(static_cast<double>(levels.size()), N);
  require(count <= 1e6, "dp_oracle: budget of 1e6 candidates exceeded");
  const detail::DelayRecursion rec(spec.model, spec.grid);
  const std::vector<double> zeros(spec.grid.history_size(), 0.0);
  std::vector<std::size_t> idx(static_cast<std::size_t>(N), 0);
  std::vector<double> c(static_cast<std::size_t>(N));
  double best = kInf;
  const auto total = static_cast<std::uint64_t>(count);
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t r = code;
    double run = 0.0;
    bool ok = true;
    for (int k = 0; k < N; ++k) {
      c[k] = levels[r % levels.size()];
      r /= levels.size();
      if (c[k] < 0.0) ok = false;
      const double h = spec.running(c[k]);
      if (!std::isfinite(h)) ok = false;
      run += spec.weight(k) * (h + (spec.n ? c[k] * c[k] / (2.0 * *spec.n) : 0.0));
    }
    if (!ok) continue;
    const auto k = rec.forward(x.x0, zeros, zeros, x.x1, c).k;
    if (spec.state_constraint && detail::min_state(k) < 0.0) continue;
    best = std::min(best, run + spec.terminal(k.back()));
  }
  return best;
}

struct DppReport {
  double residual = 0.0;
  double W_full = 0.0;
  double running = 0.0;
  double W_tail = 0.0;
};

/// |W_n(t, x) - (running cost of c* on the first steps + W_n(t', y(t')))|,
/// with y(t') the structural state reached under the optimal control.
inline DppReport dpp_check(const ObjectiveSpec& spec, const M2Point& x, int steps, const SolverOptions& opt = {}) {
  const auto& g = spec.grid;
  require(steps >= 0 && steps <= g.n_t, "dpp_check: split outside the horizon");
  const auto full = solve_penalized(spec, x, opt);
  DppReport rep;
  rep.W_full = full.value;
  if (steps == 0) {
    rep.W_tail = full.value;
    return rep;
  }
  const double n = *spec.n;
  const double d = g.delta();
  for (int k = 0; k < steps; ++k) {
    const double c = full.control.values[k];
    rep.running += spec.weight(k) * (spec.running(c) + c * c / (2.0 * n));
  }
  if (spec.state_constraint)
    for (int j = 1; j <= steps; ++j) {
      const double v = std::max(0.0, -full.k[j]);
      rep.running += full.beta * d * v * v;
    }
  const auto y = structural_state_at(spec.model, g, x, full.control, steps);
  ObjectiveSpec tail = spec.with_grid(g.advanced(steps));
  tail.beta_schedule = {full.beta};
  if (steps == g.n_t) {
    rep.W_tail = spec.terminal(y.x0);
  } else {
    rep.W_tail = solve_penalized(tail, y, opt).value;
  }
  rep.residual = std::abs(rep.W_full - (rep.running + rep.W_tail));
  return rep;
}

/// Random smooth M2 points with x0 in [x0_lo, x0_hi] and a bounded x1.
inline std::vector<std::pair<M2Point, M2Point>> random_segments(const Grid& g, int count, std::uint64_t seed,
                                                                double x0_lo = 0.5, double x0_hi = 2.0,
                                                                double x1_scale = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ux(x0_lo, x0_hi);
  auto point = [&] {
    M2Point p{ux(rng), std::vector<double>(g.history_size())};
    const double a = u(rng), b = u(rng), c = u(rng);
    for (int m = 0; m <= g.n_r; ++m) {
      const double th = g.theta(m) / g.R;
      p.x1[m] = x1_scale * (a + b * std::sin(M_PI * th) + c * th * th);
    }
    return p;
  };
  std::vector<std::pair<M2Point, M2Point>> out;
  for (int i = 0; i < count; ++i) {
    auto p = point();
    auto q = point();
    out.emplace_back(std::move(p), std::move(q));
  }
  return out;
}

/// max over segments of W_n((x + x')/2) - (W_n(x) + W_n(x'))/2, clipped at 0.
inline double convexity_check(const ObjectiveSpec& spec, std::span<const std::pair<M2Point, M2Point>> segments,
                              const SolverOptions& opt = {}) {
  double worst = 0.0;
  for (const auto& [a, b] : segments) {
    const double wa = solve_penalized(spec, a, opt).value;
    const double wb = solve_penalized(spec, b, opt).value;
    const double wm = solve_penalized(spec, 0.5 * (a + b), opt).value;
    worst = std::max(worst, wm - 0.5 * (wa + wb));
  }
  return worst;
}

}  // namespace delaydp
