#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "delaydp/grid.hpp"
#include "delaydp/model.hpp"

namespace delaydp {

// Discretization conventions shared by every module.
//
// A step of the method of steps is an explicit trapezoid (Heun) step
//   k[j+1] = k[j] + delta/2 * (f+(s_j) + f-(s_{j+1}))
// where f+ and f- apply the state and control functionals to the windows of
// length R ending at s_j (right limit) and s_{j+1} (left limit). Every node of
// a window that is not the current time reads the left limit of the path:
// states are continuous on (t, T], the control value at node s_q (q >= 1) is
// the one of the step ending there, and the node t itself belongs to the
// history (phi1(0), omega(0)). Only the current point of f+ reads the right
// limit (k[j], c[j]); in f- the current state is the predictor.
//
// With this convention the history enters the recursion only through the
// aggregate forcing x1 of the structural state, and restarting the recursion
// at any node from the structural state reproduces the continuation exactly.

namespace detail {

/// Linear recursion behind simulate and the structural evolution. The same
/// code runs with full histories (and no forcing) or with zero histories and
/// the structural forcing x1.
class DelayRecursion {
 public:
  DelayRecursion(const ModelSpec& model, const Grid& grid) : grid_(grid) {
    model.check_grid(grid);
    const double d = grid.delta();
    ws_ = model.state_functional(grid).window_weights(d);
    wc_ = model.control_functional(grid).window_weights(d);
    for (int i = 0; i < grid.n_r; ++i) {
      if (ws_[i] != 0.0) s_idx_.push_back(i);
      if (wc_[i] != 0.0) c_idx_.push_back(i);
    }
  }

  const Grid& grid() const { return grid_; }
  std::span<const double> state_weights() const { return ws_; }
  std::span<const double> control_weights() const { return wc_; }

  struct Run {
    std::vector<double> k;
    std::vector<double> kdot;
  };

  /// hist_state/hist_control: n_r + 1 history samples (zeros for the
  /// structural form); forcing: x1 samples or empty.
  Run forward(double x0, std::span<const double> hist_state, std::span<const double> hist_control,
              std::span<const double> forcing, std::span<const double> control) const {
    const int nr = grid_.n_r, nt = grid_.n_t;
    const double d = grid_.delta();
    std::vector<double> S(grid_.path_size(), 0.0), C(grid_.path_size(), 0.0);
    std::copy(hist_state.begin(), hist_state.end(), S.begin());
    std::copy(hist_control.begin(), hist_control.end(), C.begin());
    for (int q = 1; q <= nt; ++q) C[nr + q] = control[q - 1];

    auto force = [&](int j) {
      return (!forcing.empty() && j <= nr) ? forcing[nr - j] : 0.0;
    };
    auto window = [&](int start) {
      double f = 0.0;
      for (int i : s_idx_) f += ws_[i] * S[start + i];
      for (int i : c_idx_) f += wc_[i] * C[start + i];
      return f;
    };

    Run run;
    run.k.assign(grid_.forward_size(), 0.0);
    run.kdot.assign(grid_.forward_size(), 0.0);
    run.k[0] = x0;
    for (int j = 0; j < nt; ++j) {
      const double cj = control[j];
      const double fp = window(j) + ws_[nr] * run.k[j] + wc_[nr] * cj + force(j);
      const double pred = run.k[j] + d * fp;
      const double fm = window(j + 1) + ws_[nr] * pred + wc_[nr] * cj + force(j + 1);
      run.k[j + 1] = run.k[j] + 0.5 * d * (fp + fm);
      S[nr + j + 1] = run.k[j + 1];
      run.kdot[j] = fp;
    }
    if (nt >= 1) {
      run.kdot[nt] = window(nt) + ws_[nr] * run.k[nt] + wc_[nr] * control[nt - 1] + force(nt);
    } else {
      run.kdot[0] = window(0) + ws_[nr] * run.k[0] + force(0);
    }
    return run;
  }

  struct Sensitivity {
    double d_x0 = 0.0;
    std::vector<double> d_control;
    std::vector<double> d_forcing;
    std::vector<double> d_hist_state;
    std::vector<double> d_hist_control;
  };

  /// Reverse sweep: given dPhi/dk[j] for j = 0..n_t, returns the gradient of
  /// Phi with respect to every input of forward().
  Sensitivity backward(std::span<const double> seeds) const {
    const int nr = grid_.n_r, nt = grid_.n_t;
    const double d = grid_.delta();
    require(seeds.size() == grid_.forward_size(), "adjoint: seed length mismatch");
    std::vector<double> adj_k(seeds.begin(), seeds.end());
    std::vector<double> adj_f(grid_.forward_size(), 0.0);
    Sensitivity out;
    out.d_control.assign(static_cast<std::size_t>(nt), 0.0);
    out.d_hist_state.assign(grid_.history_size(), 0.0);
    out.d_hist_control.assign(grid_.history_size(), 0.0);

    auto add_state = [&](int g, double v) {
      if (g <= nr) out.d_hist_state[g] += v;
      else adj_k[g - nr] += v;
    };
    auto add_control = [&](int g, double v) {
      if (g <= nr) out.d_hist_control[g] += v;
      else out.d_control[g - nr - 1] += v;
    };
    auto window_bar = [&](int start, double bar) {
      for (int i : s_idx_) add_state(start + i, bar * ws_[i]);
      for (int i : c_idx_) add_control(start + i, bar * wc_[i]);
    };

    for (int j = nt - 1; j >= 0; --j) {
      const double a = adj_k[j + 1];
      adj_k[j] += a;
      double fp_bar = 0.5 * d * a;
      const double fm_bar = 0.5 * d * a;
      window_bar(j + 1, fm_bar);
      const double pred_bar = fm_bar * ws_[nr];
      out.d_control[j] += fm_bar * wc_[nr];
      adj_f[j + 1] += fm_bar;
      adj_k[j] += pred_bar;
      fp_bar += d * pred_bar;
      window_bar(j, fp_bar);
      adj_k[j] += fp_bar * ws_[nr];
      out.d_control[j] += fp_bar * wc_[nr];
      adj_f[j] += fp_bar;
    }
    out.d_x0 = adj_k[0];
    out.d_forcing.assign(grid_.history_size(), 0.0);
    for (int j = 0; j <= std::min(nr, nt); ++j) out.d_forcing[nr - j] = adj_f[j];
    return out;
  }

 private:
  Grid grid_;
  std::vector<double> ws_, wc_;
  std::vector<int> s_idx_, c_idx_;
};

}  // namespace detail

/// Sampled solution of the controlled DDE on the forward nodes t..T.
struct Trajectory {
  Grid grid;
  std::vector<double> k;
  std::vector<double> kdot;
  /// Production a*k for AK; the goodwill itself for the advertising model.
  std::vector<double> output;
  /// Investment i = a*k - c (AK only; empty otherwise).
  std::vector<double> investment;
};

/// Control value attached to forward node j: c[j] on [s_j, s_j+1), and the
/// last step's value at T.
inline double control_at_node(const ControlGrid& c, int j) {
  if (c.values.empty()) return 0.0;
  return c.values[std::min<std::size_t>(static_cast<std::size_t>(j), c.values.size() - 1)];
}

inline void check_simulation_inputs(const ModelSpec& model, const Grid& grid, const InitialTriple& init,
                                    const ControlGrid& control) {
  model.validate();
  model.check_grid(grid);
  init.validate(model, grid);
  control.validate(grid);
}

/// Method-of-steps solution of the original DDE from the triple (phi0, phi1, omega).
inline Trajectory simulate(const ModelSpec& model, const Grid& grid, const InitialTriple& init,
                           const ControlGrid& control) {
  check_simulation_inputs(model, grid, init, control);
  detail::DelayRecursion rec(model, grid);
  auto run = rec.forward(init.phi0, init.phi1, init.omega, {}, control.values);
  Trajectory tr{grid, std::move(run.k), std::move(run.kdot), {}, {}};
  tr.output.resize(tr.k.size());
  if (model.kind == ModelKind::AK) {
    tr.investment.resize(tr.k.size());
    for (std::size_t j = 0; j < tr.k.size(); ++j) {
      tr.output[j] = model.a * tr.k[j];
      tr.investment[j] = tr.output[j] - control_at_node(control, static_cast<int>(j));
    }
  } else {
    tr.output = tr.k;
  }
  return tr;
}

/// The n_r + 1 samples of a full path (on [t - R, T]) over [s - R, s].
inline std::vector<double> segment_extract(const Grid& grid, std::span<const double> path, double s) {
  require(path.size() == grid.path_size(), "segment_extract: path has wrong sample count");
  const int j = grid.node_index(s);
  return {path.begin() + j, path.begin() + j + grid.n_r + 1};
}

/// Zero extension of a forward path (t..T) to [t - R, T].
inline std::vector<double> extend_plus(const Grid& grid, std::span<const double> forward) {
  require(forward.size() == grid.forward_size(), "extend_plus: wrong sample count");
  std::vector<double> out(grid.path_size(), 0.0);
  std::copy(forward.begin(), forward.end(), out.begin() + grid.n_r);
  return out;
}

/// Zero extension of a history (-R..0) to [t - R, T]; zero from t on.
inline std::vector<double> extend_minus(const Grid& grid, std::span<const double> history) {
  require(history.size() == grid.history_size(), "extend_minus: wrong sample count");
  std::vector<double> out(grid.path_size(), 0.0);
  std::copy(history.begin(), history.end() - 1, out.begin());
  return out;
}

/// Left-limit node samples of the control path on [t - R, T]: omega on the
/// history nodes, then the value of the step ending at each forward node.
/// With zero_history the history part (including node t) is zero, which is
/// the zero extension e_+ read from the left.
inline std::vector<double> control_left_limits(const Grid& grid, std::span<const double> omega,
                                               const ControlGrid& control, bool zero_history = false) {
  std::vector<double> out(grid.path_size(), 0.0);
  if (!zero_history) std::copy(omega.begin(), omega.end(), out.begin());
  for (int q = 1; q <= grid.n_t; ++q) out[grid.n_r + q] = control.values[q - 1];
  return out;
}

struct EstimateReport {
  double sup_norm_k = 0.0;
  double data_norm = 0.0;
  double ratio = 0.0;
};

/// sup|k| against |phi0| + |phi1|_L2 + |omega|_L2 + |c|_L2.
inline EstimateReport estimate_check(const ModelSpec& model, const Grid& grid, const InitialTriple& init,
                                     const ControlGrid& control) {
  const auto tr = simulate(model, grid, init, control);
  EstimateReport r;
  for (double v : tr.k) r.sup_norm_k = std::max(r.sup_norm_k, std::abs(v));
  const double d = grid.delta();
  double c2 = 0.0;
  for (double v : control.values) c2 += v * v * d;
  r.data_norm = std::abs(init.phi0) + trapezoid_norm(init.phi1, d) + trapezoid_norm(init.omega, d) +
                std::sqrt(c2);
  r.ratio = r.data_norm > 0.0 ? r.sup_norm_k / r.data_norm : 0.0;
  return r;
}

}  // namespace delaydp
