#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "lq_oracle.hpp"
#include "test_support.hpp"

using namespace delaydp;
using namespace delaydp::testing;

namespace {

double pair_effective(const ObjectiveSpec& spec, const GradientEstimate& p, const M2Point& v) {
  const auto w = detail::forcing_weights(spec.grid);
  double s = p.p0 * v.x0;
  for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * p.p1[m] * v.x1[m];
  return s;
}

}  // namespace

TEST_CASE("forcing weights count the Heun steps reading each node", "[hjb]") {
  const Grid g(0.0, 1.0, 4, 2);
  const auto w = detail::forcing_weights(g);
  const double d = g.delta();
  CHECK(w[4] == 0.5 * d);
  CHECK(w[3] == d);
  CHECK(w[2] == 0.5 * d);
  CHECK(w[1] == 0.0);
  CHECK(w[0] == 0.0);
  const auto wl = detail::forcing_weights(Grid(0.0, 1.0, 4, 9));
  CHECK(wl[0] == d);
  CHECK(wl[4] == 0.5 * d);
}

TEST_CASE("LQ gradient matches the normal-equations gradient", "[hjb]") {
  const auto [spec, x] = lq_instance();
  const auto o = lq_oracle(spec, x);
  const auto p = gradient_fd(spec, x);
  const auto w = detail::forcing_weights(spec.grid);
  CHECK(p.bump == default_bump(spec, x));
  CHECK_FALSE(p.one_sided);
  CHECK(std::abs(p.p0 - o.p0) <= 1e-4);
  for (int m = 0; m <= spec.grid.n_r; ++m) {
    const double expect = w[m] > 0.0 ? o.dW_dx1[m] / w[m] : 0.0;
    CHECK(std::abs(p.p1[m] - expect) <= 1e-4);
  }
}

TEST_CASE("nodes beyond the horizon carry no gradient", "[hjb]") {
  auto [spec, x] = lq_instance(20, 4.0, 0.5);
  const auto p = gradient_fd(spec, x);
  for (int m = 0; m < spec.grid.n_r - spec.grid.n_t; ++m) CHECK(p.p1[m] == 0.0);
  CHECK(p.p1[spec.grid.n_r - spec.grid.n_t] != 0.0);
}

TEST_CASE("directional derivative along a state perturbation", "[hjb][property]") {
  const auto [spec, x] = reference_ak();
  const auto sol = solve_penalized(spec, x, gradient_solver_options());
  REQUIRE(sol.converged);
  REQUIRE(*std::min_element(sol.control.values.begin(), sol.control.values.end()) > 0.0);
  const auto p = gradient_fd(spec, x);

  // the state increment produced by perturbing the optimal control
  auto c = sol.control;
  for (double& v : c.values) v *= 1.1;
  const auto moved = structural_state_at(spec.model, spec.grid, x, c, 1);
  const auto base = structural_state_at(spec.model, spec.grid, x, sol.control, 1);
  const M2Point v = moved - base;

  for (double eps : {1e-2, 5e-3}) {
    const double W1 = solve_penalized(spec, x + eps * v, gradient_solver_options()).value;
    const double fd = (W1 - sol.value) / eps;
    const double lin = pair_effective(spec, p, v);
    CHECK(std::abs(fd - lin) <= 10.0 * (eps + p.bump) * norm(v, spec.grid.delta()));
  }
}

TEST_CASE("a problem even in theta has an even gradient", "[hjb]") {
  ObjectiveSpec s;
  s.model = ModelSpec::advertising(0.0, SampledDensity(0.0), 1.0, SampledDensity(0.0), 1.0, 0.0);
  s.grid = Grid::from_horizon(0.0, 1.5, 1.0, 10);
  s.running = ConvexScalarFn::quadratic(1.0, 0.5);
  s.terminal = ConvexScalarFn::quadratic(1.0, 3.0);
  s.n = 4.0;
  M2Point x{1.0, std::vector<double>(s.grid.history_size())};
  for (int m = 0; m <= s.grid.n_r; ++m) {
    const double th = s.grid.theta(m);
    x.x1[m] = 0.2 + 0.1 * std::cos(2.0 * M_PI * (th + 0.5));
  }
  const auto p = gradient_fd(s, x);
  const int nr = s.grid.n_r;
  for (int m = 0; m <= nr; ++m) CHECK(std::abs(p.p1[m] - p.p1[nr - m]) <= 1e-5);
}

TEST_CASE("terminal slice equals the terminal cost", "[hjb]") {
  for (auto inst : {reference_ak(), reference_advertising(), lq_instance()}) {
    for (double x0 : {0.0, 0.3, 1.0, 4.0}) {
      inst.x.x0 = x0;
      CHECK(terminal_gap(inst.spec, inst.x) <= 1e-12);
    }
  }
}

TEST_CASE("compatibility gap vanishes under refinement on LQ", "[hjb][property]") {
  std::vector<double> compat;
  for (int nr : {10, 20, 40}) {
    const auto [spec, x] = lq_instance(nr);
    compat.push_back(gradient_fd(spec, x, 1e-3 * 20.0 / nr).compat);
  }
  for (std::size_t i = 1; i < compat.size(); ++i) CHECK(compat[i] <= 0.6 * compat[i - 1]);
}

TEST_CASE("HJB residual decreases under joint refinement on LQ", "[hjb][property]") {
  std::vector<double> res;
  for (int nr : {10, 20, 40}) {
    const auto [spec, x] = lq_instance(nr);
    const auto r = hjb_residual(spec, x, 1e-3 * 20.0 / nr);
    CHECK_FALSE(r.low_confidence);
    res.push_back(r.residual);
  }
  for (std::size_t i = 1; i < res.size(); ++i) CHECK(res[i] <= res[i - 1]);
  CHECK(res.back() <= 1e-3);
}

TEST_CASE("HJB residual on random CRRA instances is reported", "[hjb]") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> A(0.1, 0.6), X(2.0, 3.0);
  for (int i = 0; i < 3; ++i) {
    const double a = A(rng), x0 = X(rng);
    std::vector<double> res;
    for (int nr : {10, 20}) {
      auto [spec, x] = reference_ak(nr);
      spec.model = ModelSpec::ak(a, 1.0, 0.05);
      x = build_x1(spec.model, spec.grid, InitialTriple::constant(spec.grid, x0, 0.2));
      const auto r = hjb_residual(spec, x);
      REQUIRE(std::isfinite(r.residual));
      res.push_back(r.residual);
    }
    INFO("a = " << a << " x0 = " << x0 << " residuals " << res[0] << " -> " << res[1]);
    SUCCEED();
  }
}

TEST_CASE("closed-loop rollout on LQ", "[hjb]") {
  const auto [spec, x] = lq_instance();
  const auto o = lq_oracle(spec, x);
  const auto r = closed_loop_rollout(spec, x);
  const auto sol = solve_penalized(spec, x);
  const double tol = SolverOptions{}.tol;
  CHECK(r.gap >= -tol);
  CHECK(r.gap <= 1e-3);
  double vs_oracle = 0.0, vs_solver = 0.0;
  for (int k = 0; k < spec.grid.n_t; ++k) {
    vs_oracle = std::max(vs_oracle, std::abs(r.control.values[k] - o.c[k]));
    vs_solver = std::max(vs_solver, std::abs(r.control.values[k] - sol.control.values[k]));
  }
  CHECK(vs_oracle <= 1e-2);
  CHECK(vs_solver <= 1e-2);
  CHECK(std::abs(r.W_n - o.value) <= 1e-4);
}

TEST_CASE("closed loop cannot beat the optimum", "[hjb][property]") {
  const double tol = SolverOptions{}.tol;
  const auto ak = reference_ak();
  const auto r = closed_loop_rollout(ak.spec, ak.x);
  CHECK(r.gap >= -tol);
  CHECK(r.gap <= 5e-2);
  const auto adv = reference_advertising(10);
  const auto ra = closed_loop_rollout(adv.spec, adv.x);
  CHECK(ra.gap >= -tol);
  CHECK(*std::min_element(r.k.begin(), r.k.end()) >= 0.0);
}

TEST_CASE("hjb errors", "[hjb]") {
  auto [spec, x] = reference_ak();
  CHECK_THROWS_AS(gradient_fd(spec, x, -1.0), InvalidInput);
  CHECK_THROWS_AS(gradient_fd(spec, x, 1e-3, std::vector<int>{99}), InvalidInput);
  auto x_neg = x;
  x_neg.x0 = -0.1;
  CHECK_THROWS_AS(hjb_residual(spec, x_neg), InvalidInput);
  CHECK_THROWS_AS(hjb_residual(spec.with_grid(Grid(2.0, 1.0, 20, 0)), x), InvalidInput);
  CHECK_THROWS_AS(closed_loop_rollout(spec.with_n(std::nullopt), x), InvalidInput);

  // the minus bump of x0 leaves the feasible set: controls only lower k
  spec.running = ConvexScalarFn::quadratic(1.0, 0.0);
  spec.terminal = ConvexScalarFn::quadratic(1.0, 0.0);
  M2Point edge = M2Point::zero(spec.grid);
  edge.x0 = 5e-4;
  const auto p = gradient_fd(spec, edge, 1e-3, std::vector<int>{});
  CHECK(p.one_sided);
  CHECK(std::isfinite(p.p0));
}
