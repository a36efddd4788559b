#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "delaydp/convex.hpp"
#include "delaydp/grid.hpp"
#include "delaydp/model.hpp"
#include "delaydp/structural.hpp"
#include "delaydp/value.hpp"

namespace delaydp {

/// Malformed configuration or data file. The message starts with
/// "source:line:" and names the offending key when there is one.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Flat key = value text, one entry per line, '#' starts a comment.
/// Keys carry dotted section prefixes (model.a, grid.nR, solver.n).
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KeyValueFile parse(std::istream& in, const std::string& source = "config") {
    KeyValueFile f;
    f.source_ = source;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string text = trim(raw);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source + ":" + std::to_string(line) + ": expected key = value");
      const std::string key = trim(text.substr(0, eq));
      const std::string value = trim(text.substr(eq + 1));
      if (key.empty()) throw ConfigError(source + ":" + std::to_string(line) + ": empty key");
      if (f.entries_.count(key))
        throw ConfigError(source + ":" + std::to_string(line) + ": key '" + key + "' repeats line " +
                          std::to_string(f.entries_[key].line));
      f.entries_[key] = {value, line};
    }
    return f;
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    return parse(in, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  /// "source:line: key 'k': what" for a present key, "source: key 'k': what" otherwise.
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const auto it = entries_.find(key);
    const std::string where = it == entries_.end() ? source_ : source_ + ":" + std::to_string(it->second.line);
    throw ConfigError(where + ": key '" + key + "': " + what);
  }

  void check(bool cond, const std::string& key, const std::string& what) const {
    if (!cond) fail(key, what);
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  std::optional<double> number(const std::string& key) const {
    used_.insert(key);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    const auto v = parse_number(it->second.value);
    if (!v) fail(key, "'" + it->second.value + "' is not a finite number");
    return v;
  }

  double number(const std::string& key, double fallback) const { return number(key).value_or(fallback); }

  double required_number(const std::string& key) const {
    const auto v = number(key);
    if (!v) fail(key, "missing");
    return *v;
  }

  std::optional<int> integer(const std::string& key) const {
    const auto v = number(key);
    if (!v) return std::nullopt;
    if (*v != std::floor(*v) || std::abs(*v) > 1e9) fail(key, "expected an integer");
    return static_cast<int>(*v);
  }

  std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
    used_.insert(key);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto v = parse_number(trim(item));
      if (!v) fail(key, "'" + trim(item) + "' is not a finite number");
      out.push_back(*v);
    }
    if (out.empty()) fail(key, "empty list");
    return out;
  }

  /// Keys never read by the consumer, which are reported as unknown.
  void reject_unused() const {
    for (const auto& [key, e] : entries_)
      if (!used_.count(key)) fail(key, "unknown key or not used by this model");
  }

  static std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::string source_;
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

/// Everything a batch run needs, validated at parse time.
struct RunConfig {
  ObjectiveSpec objective;
  SolverOptions solver;
  std::vector<double> n_list{1, 2, 4, 8, 16, 32};
  InitialTriple init;
  double simulate_control = 0.0;
};

namespace detail {

inline ConvexScalarFn convex_from(const KeyValueFile& f, const std::string& key, const std::string& fallback,
                                  bool terminal) {
  const std::string tag = f.text(key, fallback);
  if (tag == "crra") {
    const double sigma = f.number(key + ".sigma", 2.0);
    f.check(sigma > 0.0, key + ".sigma", "must be positive");
    return ConvexScalarFn::crra(sigma);
  }
  if (tag == "log") return ConvexScalarFn::log_utility();
  if (tag == "quadratic") {
    const double q = f.number(key + ".q", 1.0);
    f.check(q > 0.0, key + ".q", "must be positive");
    return ConvexScalarFn::quadratic(q, f.number(key + ".center", 0.0));
  }
  if (tag == "linear") return ConvexScalarFn::linear(f.number(key + ".slope", terminal ? -1.0 : 1.0));
  f.fail(key, "unknown cost '" + tag + "' (expected " +
                  (terminal ? std::string("linear or quadratic") : std::string("crra, log, quadratic or linear")) +
                  ")");
}

}  // namespace detail

inline RunConfig parse_run_config(const KeyValueFile& f) {
  RunConfig rc;
  auto& obj = rc.objective;

  const std::string kind = f.text("model.kind", "ak");
  const double R = f.number("model.R", 1.0);
  f.check(R > 0.0, "model.R", "must be positive");
  const double rho = f.number("model.rho", 0.0);
  f.check(rho >= 0.0, "model.rho", "must be >= 0");
  if (kind == "ak") {
    const double a = f.number("model.a", 0.3);
    f.check(a > 0.0, "model.a", "AK requires a > 0");
    obj.model = ModelSpec::ak(a, R, rho);
  } else if (kind == "advertising") {
    const double a0 = f.number("model.a0", 0.0);
    f.check(a0 <= 0.0, "model.a0", "advertising requires a0 <= 0");
    const double b0 = f.number("model.b0", 0.0);
    f.check(b0 >= 0.0, "model.b0", "advertising requires b0 >= 0");
    const auto a1 = f.list("model.a1", {0.0});
    const auto b1 = f.list("model.b1", {0.0});
    for (double v : b1) f.check(v >= 0.0, "model.b1", "advertising requires b1 >= 0");
    obj.model = ModelSpec::advertising(a0, SampledDensity(a1), b0, SampledDensity(b1), R, rho);
  } else {
    f.fail("model.kind", "unknown model '" + kind + "' (expected ak or advertising)");
  }
  obj.running = detail::convex_from(f, "model.h", "crra", false);
  obj.terminal = detail::convex_from(f, "model.phi0", "linear", true);

  const auto nR = f.integer("grid.nR").value_or(20);
  f.check(nR >= 2, "grid.nR", "must be >= 2");
  const double t = f.number("grid.t", 0.0);
  const auto nT = f.integer("grid.nT");
  const auto T = f.number("grid.T");
  if (nT && T) f.fail("grid.T", "give either grid.T or grid.nT, not both");
  if (nT) {
    f.check(*nT >= 0, "grid.nT", "must be >= 0");
    obj.grid = Grid(t, R, nR, *nT);
  } else {
    const double horizon = T.value_or(t + 2.0 * R);
    f.check(horizon >= t, "grid.T", "must not precede grid.t");
    try {
      obj.grid = Grid::from_horizon(t, horizon, R, nR);
    } catch (const InvalidInput& e) {
      f.fail("grid.T", e.what());
    }
  }

  rc.solver.tol = f.number("solver.tol", rc.solver.tol);
  f.check(rc.solver.tol > 0.0, "solver.tol", "must be positive");
  rc.solver.max_iter = f.integer("solver.maxIter").value_or(rc.solver.max_iter);
  f.check(rc.solver.max_iter >= 1, "solver.maxIter", "must be >= 1");
  rc.solver.feasibility_tol = f.number("solver.feasibilityTol", rc.solver.feasibility_tol);
  f.check(rc.solver.feasibility_tol > 0.0, "solver.feasibilityTol", "must be positive");
  obj.beta_schedule = f.list("solver.beta", obj.beta_schedule);
  for (std::size_t i = 0; i < obj.beta_schedule.size(); ++i) {
    f.check(obj.beta_schedule[i] > 0.0, "solver.beta", "entries must be positive");
    if (i > 0) f.check(obj.beta_schedule[i] > obj.beta_schedule[i - 1], "solver.beta", "must increase");
  }
  rc.n_list = f.list("solver.n", rc.n_list);
  for (std::size_t i = 0; i < rc.n_list.size(); ++i) {
    f.check(rc.n_list[i] >= 1.0, "solver.n", "entries must be >= 1");
    if (i > 0) f.check(rc.n_list[i] > rc.n_list[i - 1], "solver.n", "must increase");
  }
  obj.n = rc.n_list.back();
  const std::string mode = f.text("solver.mode", "penalty");
  if (mode == "penalty") {
    obj.mode = ConstraintMode::Penalty;
  } else if (mode == "reject") {
    obj.mode = ConstraintMode::Reject;
  } else {
    f.fail("solver.mode", "expected penalty or reject");
  }
  const std::string sc = f.text("solver.stateConstraint", "true");
  f.check(sc == "true" || sc == "false", "solver.stateConstraint", "expected true or false");
  obj.state_constraint = sc == "true";

  const double state = f.number("init.state", 1.0);
  const double history = f.number("init.history", state);
  const double control = f.number("init.control", 0.0);
  rc.init = InitialTriple::constant(obj.grid, history, control);
  rc.init.phi0 = state;
  try {
    rc.init.validate(obj.model, obj.grid);
  } catch (const InvalidInput& e) {
    f.fail("init.state", e.what());
  }
  rc.simulate_control = f.number("simulate.control", 0.0);

  f.reject_unused();
  try {
    obj.validate();
  } catch (const InvalidInput& e) {
    f.fail("model.phi0", e.what());
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(KeyValueFile::load(path)); }

/// Single-column numeric file. A non-numeric first line is taken as a header;
/// blank lines are skipped.
inline std::vector<double> read_column(std::istream& in, const std::string& source) {
  std::vector<double> out;
  std::string raw;
  int line = 0;
  bool first = true;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
    if (s.empty()) continue;
    if (s.find(',') != std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line) + ": expected a single column");
    const auto v = KeyValueFile::parse_number(s);
    if (!v) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError(source + ":" + std::to_string(line) + ": '" + s + "' is not a finite number");
    }
    first = false;
    out.push_back(*v);
  }
  return out;
}

inline std::vector<double> read_column(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  return read_column(in, path);
}

/// Initial triple laid out as phi0, then phi1 on -R..0, then omega on -R..0.
inline InitialTriple read_initial_triple(const std::string& path, const RunConfig& rc) {
  const auto v = read_column(path);
  const auto& g = rc.objective.grid;
  const std::size_t h = g.history_size();
  if (v.size() != 1 + 2 * h)
    throw ConfigError(path + ": expected " + std::to_string(1 + 2 * h) + " values (phi0, " + std::to_string(h) +
                      " of phi1, " + std::to_string(h) + " of omega), got " + std::to_string(v.size()));
  InitialTriple init{v[0], {v.begin() + 1, v.begin() + 1 + h}, {v.begin() + 1 + h, v.end()}};
  try {
    init.validate(rc.objective.model, g);
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return init;
}

/// Structural state laid out as x0, then x1 on -R..0.
inline M2Point read_m2_point(const std::string& path, const Grid& g) {
  const auto v = read_column(path);
  const std::size_t h = g.history_size();
  if (v.size() != 1 + h)
    throw ConfigError(path + ": expected " + std::to_string(1 + h) + " values (x0, " + std::to_string(h) +
                      " of x1), got " + std::to_string(v.size()));
  return {v[0], {v.begin() + 1, v.end()}};
}

/// 17 significant digits, enough to round-trip any double.
inline std::string format_number(double v) {
  if (v == 0.0) v = 0.0;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_number(r[i]);
    out << '\n';
  }
}

}  // namespace delaydp
