#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "delaydp/dde.hpp"
#include "delaydp/grid.hpp"
#include "delaydp/model.hpp"

namespace delaydp {

/// Element (x0, x1) of R x L2([-R, 0]) stored on the n_r + 1 history nodes.
/// Pointwise reads of x1 are grid-level interpretations of an L2 class.
struct M2Point {
  double x0 = 0.0;
  std::vector<double> x1;

  static M2Point zero(const Grid& g) { return {0.0, std::vector<double>(g.history_size(), 0.0)}; }

  M2Point& operator+=(const M2Point& o) {
    require(o.x1.size() == x1.size(), "M2Point: size mismatch");
    x0 += o.x0;
    for (std::size_t i = 0; i < x1.size(); ++i) x1[i] += o.x1[i];
    return *this;
  }
  M2Point& operator*=(double s) {
    x0 *= s;
    for (double& v : x1) v *= s;
    return *this;
  }
  friend M2Point operator+(M2Point a, const M2Point& b) { return a += b; }
  friend M2Point operator*(double s, M2Point a) { return a *= s; }
  friend M2Point operator-(const M2Point& a, const M2Point& b) { return a + (-1.0) * b; }
};

inline double inner(const M2Point& a, const M2Point& b, double delta) {
  return a.x0 * b.x0 + trapezoid_dot(a.x1, b.x1, delta);
}

inline double norm(const M2Point& a, double delta) { return std::sqrt(std::max(0.0, inner(a, a, delta))); }

/// Evaluates (f-bar phi)(alpha) = f(est(phi)_{-alpha}) node by node: at each
/// alpha the zero extension of phi is shifted and the functional applied with
/// its own quadrature. est(phi) vanishes beyond theta = 0, and the point
/// evaluation at 0 of the shifted window always falls there.
inline std::vector<double> lbar_by_definition(const HistoryFunctional& f, std::span<const double> phi1,
                                              double delta) {
  const std::size_t n = phi1.size();
  require(n >= 3, "lbar: need at least three samples");
  f.validate(n);
  const int nr = static_cast<int>(n) - 1;
  std::vector<double> out(n), seg(n);
  for (int m = 0; m <= nr; ++m) {
    for (int i = 0; i <= nr; ++i) {
      const int q = i + nr - m;
      seg[i] = (i < nr && q <= nr) ? phi1[q] : 0.0;
    }
    out[m] = apply_history_functional(f, seg, delta);
  }
  return out;
}

/// Reflection formula for point-mass functionals c0 phi(0) + cR phi(-R):
/// (f-bar phi)(alpha) = cR * phi(-alpha - R). For L this is -phi(-alpha - R).
inline std::vector<double> lbar_reflection(double cR, std::span<const double> phi1) {
  const std::size_t n = phi1.size();
  std::vector<double> out(n);
  for (std::size_t m = 0; m < n; ++m) out[m] = cR * phi1[n - 1 - m];
  return out;
}

inline std::vector<double> lbar(const HistoryFunctional& f, std::span<const double> phi1, double delta) {
  require(phi1.size() == f.density.size(), "lbar: length mismatch");
  if (!f.has_density()) return lbar_reflection(f.cR, phi1);
  return lbar_by_definition(f, phi1, delta);
}

/// x = (phi0, a L-bar phi1 - L-bar omega) for AK, (x, N-bar theta + B-bar delta)
/// for the advertising model.
inline M2Point build_x1(const ModelSpec& model, const Grid& grid, const InitialTriple& init) {
  model.check_grid(grid);
  init.validate(model, grid);
  const double d = grid.delta();
  auto xs = lbar(model.state_functional(grid), init.phi1, d);
  const auto xc = lbar(model.control_functional(grid), init.omega, d);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += xc[i];
  return {init.phi0, std::move(xs)};
}

/// (eta(s) u)(theta) = u(theta - (s - t)) where defined, zero for theta < -R + s - t.
inline std::vector<double> eta_shift(const Grid& grid, double s, std::span<const double> u) {
  require(u.size() == grid.history_size(), "eta_shift: wrong sample count");
  const int j = grid.node_index(s);
  std::vector<double> out(u.size(), 0.0);
  for (int m = j; m <= grid.n_r; ++m) out[m] = u[m - j];
  return out;
}

struct StructuralTrajectory {
  Grid grid;
  std::vector<M2Point> points;
};

namespace detail {

/// Structural state at forward node j given the forward state/control and
/// the initial x1: y1 = f-bar(e+ k)_s + g-bar(e+ c)_s + eta(s) x1, with the
/// zero-extended paths read as left limits.
inline M2Point assemble_structural(const ModelSpec& model, const Grid& grid, std::span<const double> k,
                                   const ControlGrid& control, std::span<const double> x1, int j) {
  const double d = grid.delta();
  std::vector<double> kpath = extend_plus(grid, k);
  kpath[grid.n_r] = 0.0;
  const auto cpath = control_left_limits(grid, {}, control, true);
  const auto ks = std::span<const double>(kpath).subspan(j, grid.history_size());
  const auto cs = std::span<const double>(cpath).subspan(j, grid.history_size());
  auto y1 = lbar(model.state_functional(grid), ks, d);
  const auto yc = lbar(model.control_functional(grid), cs, d);
  const auto ye = eta_shift(grid, grid.time(j), x1);
  for (std::size_t m = 0; m < y1.size(); ++m) y1[m] += yc[m] + ye[m];
  return {k[j], std::move(y1)};
}

}  // namespace detail

/// Structural state along the solution from an initial triple.
inline StructuralTrajectory structural_trajectory(const ModelSpec& model, const Grid& grid,
                                                  const InitialTriple& init, const ControlGrid& control) {
  const auto tr = simulate(model, grid, init, control);
  const auto x = build_x1(model, grid, init);
  StructuralTrajectory out{grid, {}};
  out.points.reserve(grid.forward_size());
  out.points.push_back(x);
  for (int j = 1; j <= grid.n_t; ++j)
    out.points.push_back(detail::assemble_structural(model, grid, tr.k, control, x.x1, j));
  return out;
}

/// Scalar component of the abstract evolution from an arbitrary x in M2:
/// dk/ds = (state functional on e+ k)(s) + (control functional on e+ c)(s) + (eta(s) x1)(0).
inline std::vector<double> evolve_scalar(const ModelSpec& model, const Grid& grid, const M2Point& x,
                                         const ControlGrid& control) {
  model.check_grid(grid);
  control.validate(grid);
  require(x.x1.size() == grid.history_size(), "evolve: x1 has wrong sample count");
  require(std::isfinite(x.x0), "evolve: x0 non-finite");
  require_finite(x.x1, "evolve x1");
  detail::DelayRecursion rec(model, grid);
  const std::vector<double> zeros(grid.history_size(), 0.0);
  return rec.forward(x.x0, zeros, zeros, x.x1, control.values).k;
}

inline StructuralTrajectory evolve_abstract(const ModelSpec& model, const Grid& grid, const M2Point& x,
                                            const ControlGrid& control) {
  const auto k = evolve_scalar(model, grid, x, control);
  StructuralTrajectory out{grid, {}};
  out.points.reserve(grid.forward_size());
  out.points.push_back(x);
  for (int j = 1; j <= grid.n_t; ++j)
    out.points.push_back(detail::assemble_structural(model, grid, k, control, x.x1, j));
  return out;
}

/// Structural state at a single node j of the evolution from x.
inline M2Point structural_state_at(const ModelSpec& model, const Grid& grid, const M2Point& x,
                                   const ControlGrid& control, int j) {
  require(j >= 0 && j <= grid.n_t, "structural_state_at: node out of range");
  if (j == 0) return x;
  const auto k = evolve_scalar(model, grid, x, control);
  return detail::assemble_structural(model, grid, k, control, x.x1, j);
}

/// S(s) phi = (z(s), z_s) for the uncontrolled equation with (z(0), z_0) = phi;
/// the history component of phi is read pointwise on the grid.
inline M2Point semigroup_apply(const ModelSpec& model, double s, const M2Point& phi) {
  require(phi.x1.size() >= 3, "semigroup: need at least three history samples");
  const int nr = static_cast<int>(phi.x1.size()) - 1;
  const Grid g = Grid::from_horizon(0.0, s, model.R, nr);
  model.check_grid(g);
  const std::vector<double> zeros(g.history_size(), 0.0);
  detail::DelayRecursion rec(model, g);
  const auto run = rec.forward(phi.x0, phi.x1, zeros, {}, std::vector<double>(g.n_t, 0.0));
  std::vector<double> path(g.path_size());
  std::copy(phi.x1.begin(), phi.x1.end(), path.begin());
  for (int q = 1; q <= g.n_t; ++q) path[nr + q] = run.k[q];
  return {run.k[g.n_t], {path.begin() + g.n_t, path.begin() + g.n_t + nr + 1}};
}

}  // namespace delaydp
