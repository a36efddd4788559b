// delaydp: batch front end.
//
//   delaydp simulate --config run.cfg [--init triple.csv] [--out DIR]
//   delaydp value    --config run.cfg [--x point.csv] [--out DIR]
//   delaydp check    --config run.cfg [--which NAME] [--seed N] [--out DIR]
//
// Exit status: 0 pass, 1 usage or parse error, 2 criterion failure,
// 3 solver hard failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "delaydp/config.hpp"
#include "delaydp/delaydp.hpp"

using namespace delaydp;
using nlohmann::json;

namespace {

enum Exit { kPass = 0, kUsage = 1, kCriterion = 2, kSolver = 3 };

struct Options {
  std::string config;
  std::string init;
  std::string x;
  std::string out;
  std::string which = "all";
  unsigned seed = 1;
};

void emit(const Options& o, const std::string& file, const std::string& body) {
  if (o.out.empty()) {
    std::cout << body;
    return;
  }
  std::filesystem::create_directories(o.out);
  std::ofstream f(std::filesystem::path(o.out) / file, std::ios::binary);
  if (!f) throw ConfigError(o.out + ": cannot write " + file);
  f << body;
}

M2Point starting_point(const Options& o, const RunConfig& rc) {
  const auto& s = rc.objective;
  if (!o.x.empty()) return read_m2_point(o.x, s.grid);
  return build_x1(s.model, s.grid, rc.init);
}

int cmd_simulate(const Options& o, const RunConfig& rc) {
  const auto& s = rc.objective;
  const auto init = o.init.empty() ? rc.init : read_initial_triple(o.init, rc);
  const auto c = ControlGrid::constant(s.grid, rc.simulate_control);
  const auto tr = simulate(s.model, s.grid, init, c);
  std::vector<std::vector<double>> rows;
  for (int j = 0; j <= s.grid.n_t; ++j) {
    const double cj = control_at_node(c, j);
    const double inv = tr.investment.empty() ? cj : tr.investment[j];
    rows.push_back({s.grid.time(j), tr.k[j], tr.kdot[j], tr.output[j], inv, cj});
  }
  std::ostringstream body;
  write_csv(body, {"s", "k", "kdot", "output", "i", "c"}, rows);
  emit(o, "trajectory.csv", body.str());
  return kPass;
}

int cmd_value(const Options& o, const RunConfig& rc) {
  const auto x = starting_point(o, rc);
  const auto tab = value_W(rc.objective, x, rc.n_list, rc.solver);
  std::vector<std::vector<double>> rows;
  int total = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < tab.n.size(); ++i) {
    const auto& r = tab.results[i];
    rows.push_back({tab.n[i], r.value, double(r.iterations), r.constraint_violation, r.gap_estimate,
                    r.converged ? 1.0 : 0.0});
    total += r.iterations;
    worst = std::max(worst, r.constraint_violation);
    if (!r.converged)
      std::cerr << "warning: n = " << format_number(tab.n[i]) << " did not converge (violation "
                << format_number(r.constraint_violation) << ", gap " << format_number(r.gap_estimate) << ")\n";
  }
  if (tab.n.size() > 1) {
    // estimate row: W from the largest n, last difference as the tail
    rows.push_back({kInf, tab.W, double(total), worst, tab.differences.back(), tab.all_converged ? 1.0 : 0.0});
  }
  std::ostringstream body;
  write_csv(body, {"n", "W_n", "iterations", "constraint_violation", "gap_estimate", "converged"}, rows);
  emit(o, "value.csv", body.str());
  if (!tab.monotone) {
    std::cerr << "criterion failure: W_n increases along the n list\n";
    return kCriterion;
  }
  return kPass;
}

json criterion(const std::string& name, bool pass, bool hard, double measured, double threshold) {
  return json{{"name", name}, {"pass", pass}, {"hard", hard}, {"measured", measured}, {"threshold", threshold}};
}

json check_equivalence(const RunConfig& rc, unsigned seed) {
  const auto& s = rc.objective;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    ControlGrid c = ControlGrid::constant(s.grid, 0.0);
    if (trial > 0)
      for (double& v : c.values) v = U(rng);
    const auto direct = simulate(s.model, s.grid, rc.init, c);
    const auto abstract = evolve_abstract(s.model, s.grid, build_x1(s.model, s.grid, rc.init), c);
    for (int j = 0; j <= s.grid.n_t; ++j)
      worst = std::max(worst, std::abs(direct.k[j] - abstract.points[j].x0));
  }
  return criterion("equivalence", worst <= 1e-10, true, worst, 1e-10);
}

json check_legendre(const RunConfig& rc) {
  const auto& h = rc.objective.running;
  std::vector<double> p;
  for (int i = 0; i <= 40; ++i) p.push_back(-4.0 + 0.2 * i);
  double worst = 0.0;
  for (double n : rc.n_list) worst = std::max(worst, yosida_conjugate_check(h, n, p));
  return criterion("legendre", worst <= 1e-5, true, worst, 1e-5);
}

json check_dpp(const RunConfig& rc, const M2Point& x) {
  const auto& s = rc.objective;
  const int N = s.grid.n_t;
  double worst = 0.0;
  for (int j : {N / 4, N / 2, 3 * N / 4}) worst = std::max(worst, dpp_check(s, x, j, rc.solver).residual);
  const double thr = 5.0 * rc.solver.tol;
  return criterion("dpp", worst <= thr, true, worst, thr);
}

json check_hjb(const RunConfig& rc, const M2Point& x) {
  const auto& s = rc.objective;
  json out = json::array();
  const double term = terminal_gap(s, x);
  out.push_back(criterion("terminal", term <= rc.solver.tol, true, term, rc.solver.tol));
  if (x.x0 > 0.0 && s.grid.n_t >= 1) {
    const auto r = hjb_residual(s, x);
    auto c = criterion("hjb_residual", !r.low_confidence, false, r.residual, 10.0 * r.gradient.bump);
    c["compat"] = r.gradient.compat;
    c["low_confidence"] = r.low_confidence;
    out.push_back(c);
  }
  return out;
}

json check_rollout(const RunConfig& rc, const M2Point& x) {
  const auto r = closed_loop_rollout(rc.objective, x);
  const double tol = rc.solver.tol;
  auto c = criterion("rollout", r.gap >= -tol && r.gap <= 5e-2, true, r.gap, 5e-2);
  c["J_closed"] = r.J_closed;
  c["W_n"] = r.W_n;
  return c;
}

int cmd_check(const Options& o, const RunConfig& rc) {
  static const std::vector<std::string> names{"equivalence", "legendre", "dpp", "hjb", "rollout"};
  if (o.which != "all" && std::find(names.begin(), names.end(), o.which) == names.end()) {
    std::cerr << "error: unknown check '" << o.which << "' (expected equivalence, legendre, dpp, hjb, rollout or all)\n";
    return kUsage;
  }
  const auto x = starting_point(o, rc);
  json criteria = json::array();
  auto wanted = [&](const std::string& n) { return o.which == "all" || o.which == n; };
  if (wanted("equivalence")) criteria.push_back(check_equivalence(rc, o.seed));
  if (wanted("legendre")) criteria.push_back(check_legendre(rc));
  if (wanted("dpp")) criteria.push_back(check_dpp(rc, x));
  if (wanted("hjb"))
    for (auto& c : check_hjb(rc, x)) criteria.push_back(c);
  if (wanted("rollout")) criteria.push_back(check_rollout(rc, x));

  bool pass = true;
  for (const auto& c : criteria)
    if (c["hard"].get<bool>() && !c["pass"].get<bool>()) pass = false;
  const json report{{"which", o.which}, {"seed", o.seed}, {"criteria", criteria}, {"pass", pass}};
  emit(o, "report.json", report.dump(2) + "\n");
  return pass ? kPass : kCriterion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal control of linear delay equations: simulation, value functions and checks"};
  app.require_subcommand(1);
  Options o;

  auto* sim = app.add_subcommand("simulate", "Trajectory CSV from an initial triple and a constant control");
  sim->add_option("--config", o.config, "Configuration file")->required();
  sim->add_option("--init", o.init, "Initial triple: phi0, phi1 samples, omega samples (one column)");
  sim->add_option("--out", o.out, "Output directory (stdout when absent)");

  auto* val = app.add_subcommand("value", "Table of W_n over the configured n list");
  val->add_option("--config", o.config, "Configuration file")->required();
  val->add_option("--x", o.x, "Structural state: x0, then x1 samples (one column)");
  val->add_option("--out", o.out, "Output directory (stdout when absent)");

  auto* chk = app.add_subcommand("check", "Pass/fail report for the named check");
  chk->add_option("--config", o.config, "Configuration file")->required();
  chk->add_option("--which", o.which, "equivalence, legendre, dpp, hjb, rollout or all");
  chk->add_option("--x", o.x, "Structural state: x0, then x1 samples (one column)");
  chk->add_option("--seed", o.seed, "Seed for randomized checks");
  chk->add_option("--out", o.out, "Output directory (stdout when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    const auto rc = load_run_config(o.config);
    if (*sim) return cmd_simulate(o, rc);
    if (*val) return cmd_value(o, rc);
    return cmd_check(o, rc);
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolver;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
