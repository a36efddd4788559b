#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "delaydp/grid.hpp"

namespace delaydp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ConvexTag { CRRA, Log, Quadratic, Linear, IndicatorNonneg, Custom };

/// Extended-value convex function on R (minimization side).
///   CRRA(sigma):      -c^(1-sigma)/(1-sigma) on c >= 0
///   Log:              -log c on c > 0
///   Quadratic(q, m):  q/2 (c - m)^2
///   Linear(m):        m c
///   IndicatorNonneg:  0 on c >= 0
/// Custom functions supply their own evaluation, subgradient interval and
/// closed domain [lo, hi].
struct ConvexScalarFn {
  ConvexTag tag = ConvexTag::Quadratic;
  double sigma = 2.0;
  double q = 1.0;
  double center = 0.0;
  double slope = 0.0;
  double lo = -kInf, hi = kInf;
  std::function<double(double)> custom_eval;
  /// Returns [left derivative, right derivative] at an interior point.
  std::function<std::pair<double, double>(double)> custom_subgradient;

  static ConvexScalarFn crra(double sigma) {
    require(std::isfinite(sigma) && sigma > 0.0, "convex: CRRA requires sigma > 0");
    if (sigma == 1.0) return log_utility();
    ConvexScalarFn f;
    f.tag = ConvexTag::CRRA;
    f.sigma = sigma;
    f.lo = 0.0;
    return f;
  }
  static ConvexScalarFn log_utility() {
    ConvexScalarFn f;
    f.tag = ConvexTag::Log;
    f.lo = 0.0;
    return f;
  }
  static ConvexScalarFn quadratic(double q, double center = 0.0) {
    require(std::isfinite(q) && q > 0.0 && std::isfinite(center), "convex: quadratic requires q > 0");
    ConvexScalarFn f;
    f.tag = ConvexTag::Quadratic;
    f.q = q;
    f.center = center;
    return f;
  }
  static ConvexScalarFn linear(double m) {
    require(std::isfinite(m), "convex: linear slope must be finite");
    ConvexScalarFn f;
    f.tag = ConvexTag::Linear;
    f.slope = m;
    return f;
  }
  static ConvexScalarFn indicator_nonneg() {
    ConvexScalarFn f;
    f.tag = ConvexTag::IndicatorNonneg;
    f.lo = 0.0;
    return f;
  }
  static ConvexScalarFn custom(std::function<double(double)> eval,
                               std::function<std::pair<double, double>(double)> subgradient, double lo = -kInf,
                               double hi = kInf) {
    require(lo <= hi, "convex: empty domain");
    ConvexScalarFn f;
    f.tag = ConvexTag::Custom;
    f.custom_eval = std::move(eval);
    f.custom_subgradient = std::move(subgradient);
    f.lo = lo;
    f.hi = hi;
    return f;
  }

  bool in_domain(double c) const {
    if (tag == ConvexTag::Log) return c > 0.0;
    if (tag == ConvexTag::CRRA && sigma > 1.0) return c > 0.0;
    return c >= lo && c <= hi;
  }

  double operator()(double c) const {
    if (std::isnan(c)) return kInf;
    switch (tag) {
      case ConvexTag::CRRA:
        if (c < 0.0) return kInf;
        if (c == 0.0) return sigma > 1.0 ? kInf : 0.0;
        if (std::isinf(c)) return sigma > 1.0 ? 0.0 : -kInf;
        return -std::pow(c, 1.0 - sigma) / (1.0 - sigma);
      case ConvexTag::Log:
        if (c <= 0.0) return kInf;
        return -std::log(c);
      case ConvexTag::Quadratic:
        return 0.5 * q * (c - center) * (c - center);
      case ConvexTag::Linear:
        return slope * c;
      case ConvexTag::IndicatorNonneg:
        return c >= 0.0 ? 0.0 : kInf;
      case ConvexTag::Custom:
        if (c < lo || c > hi) return kInf;
        return custom_eval(c);
    }
    return kInf;
  }

  /// [left, right] derivative at c; (+inf, +inf) or (-inf, -inf) style bounds
  /// mark the domain boundary.
  std::pair<double, double> subgradient(double c) const {
    switch (tag) {
      case ConvexTag::CRRA:
      case ConvexTag::Log: {
        if (c < 0.0) return {kInf, kInf};
        if (c == 0.0) return {-kInf, -kInf};
        const double g = -std::pow(c, -sigma_eff());
        return {g, g};
      }
      case ConvexTag::Quadratic:
        return {q * (c - center), q * (c - center)};
      case ConvexTag::Linear:
        return {slope, slope};
      case ConvexTag::IndicatorNonneg:
        if (c < 0.0) return {kInf, kInf};
        if (c == 0.0) return {-kInf, 0.0};
        return {0.0, 0.0};
      case ConvexTag::Custom:
        if (c < lo) return {-kInf, -kInf};
        if (c > hi) return {kInf, kInf};
        return custom_subgradient(c);
    }
    return {0.0, 0.0};
  }

  double sigma_eff() const { return tag == ConvexTag::Log ? 1.0 : sigma; }
};

namespace detail {

inline constexpr double kBracketCap = 1e3;
inline constexpr double kBisectTol = 1e-10;

/// Least maximizer of p c - f(c) over the domain clipped to the bracket
/// cap, from the monotone subgradient; nullopt when the sup runs past the cap.
inline std::optional<double> invert_subgradient(const ConvexScalarFn& f, double p) {
  double lo = std::max(f.lo, -kBracketCap), hi = std::min(f.hi, kBracketCap);
  if (f.subgradient(lo).second >= p) {
    if (f.lo < -kBracketCap && f.subgradient(lo).first > p) return std::nullopt;
    return lo;
  }
  if (f.subgradient(hi).first < p) {
    if (f.hi > kBracketCap && f.subgradient(hi).second < p) return std::nullopt;
    return hi;
  }
  while (hi - lo > kBisectTol * (1.0 + std::abs(lo))) {
    const double mid = 0.5 * (lo + hi);
    if (f.subgradient(mid).second >= p) hi = mid;
    else lo = mid;
  }
  return hi;
}

}  // namespace detail

/// Legendre-Fenchel conjugate f*(p) = sup_c { p c - f(c) }.
inline double conjugate(const ConvexScalarFn& f, double p) {
  switch (f.tag) {
    case ConvexTag::Quadratic:
      return p * f.center + p * p / (2.0 * f.q);
    case ConvexTag::Linear:
      return p == f.slope ? 0.0 : kInf;
    case ConvexTag::IndicatorNonneg:
      return p <= 0.0 ? 0.0 : kInf;
    case ConvexTag::CRRA: {
      if (p > 0.0) return kInf;
      if (p == 0.0) return f.sigma > 1.0 ? 0.0 : kInf;
      const double c = std::pow(-p, -1.0 / f.sigma);
      return std::pow(c, 1.0 - f.sigma) * f.sigma / (1.0 - f.sigma);
    }
    case ConvexTag::Log:
      if (p >= 0.0) return kInf;
      return -1.0 - std::log(-p);
    case ConvexTag::Custom: {
      const auto c = detail::invert_subgradient(f, p);
      if (!c) return kInf;
      return p * *c - f(*c);
    }
  }
  return kInf;
}

/// Unique minimizer of f(y) + n/2 (x - y)^2; n may be any positive weight.
inline double prox(const ConvexScalarFn& f, double n, double x) {
  require(n > 0.0 && std::isfinite(n), "prox: weight must be positive");
  switch (f.tag) {
    case ConvexTag::Quadratic:
      return (f.q * f.center + n * x) / (f.q + n);
    case ConvexTag::Linear:
      return x - f.slope / n;
    case ConvexTag::IndicatorNonneg:
      return std::max(x, 0.0);
    case ConvexTag::Log:
      return 0.5 * (x + std::sqrt(x * x + 4.0 / n));
    case ConvexTag::CRRA: {
      // n (y - x) = y^-sigma, root in y > 0
      auto g = [&](double y) { return n * (y - x) - std::pow(y, -f.sigma); };
      double lo = 0.0, hi = std::max(1.0, x + 1.0);
      while (g(hi) < 0.0) hi *= 2.0;
      // lower bracket: g(lo) -> -inf as lo -> 0+
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (g(mid) < 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    case ConvexTag::Custom: {
      // 0 in df(y) + n (y - x): bisection on y over the domain
      auto right = [&](double y) { return f.subgradient(y).second + n * (y - x); };
      double lo = std::isfinite(f.lo) ? f.lo : x - 1.0, hi = std::isfinite(f.hi) ? f.hi : x + 1.0;
      while (!std::isfinite(f.lo) && right(lo) > 0.0) lo = x - 2.0 * (x - lo);
      while (!std::isfinite(f.hi) && right(hi) < 0.0) hi = x + 2.0 * (hi - x);
      if (right(lo) >= 0.0) return lo;
      if (f.subgradient(hi).first + n * (hi - x) <= 0.0) return hi;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (right(mid) < 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
  }
  return x;
}

/// Moreau-Yosida envelope S_n f(x) = inf_y { f(y) + n/2 |x - y|^2 }.
inline double moreau(const ConvexScalarFn& f, double n, double x) {
  const double y = prox(f, n, x);
  return f(y) + 0.5 * n * (x - y) * (x - y);
}

/// Conjugate of the Moreau envelope computed numerically from its gradient
/// n (x - prox(x)), which is monotone and continuous.
inline double moreau_conjugate(const ConvexScalarFn& f, double n, double p) {
  auto grad = [&](double x) { return n * (x - prox(f, n, x)); };
  double lo = -1.0, hi = 1.0;
  int guard = 0;
  while (grad(hi) < p && guard++ < 200) hi *= 2.0;
  if (grad(hi) < p) return kInf;
  guard = 0;
  while (grad(lo) > p && guard++ < 200) lo *= 2.0;
  if (grad(lo) > p) return kInf;
  for (int it = 0; it < 300 && hi - lo > 1e-14 * (1.0 + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (grad(mid) < p ? lo : hi) = mid;
  }
  const double x = 0.5 * (lo + hi);
  return p * x - moreau(f, n, x);
}

/// max |[S_n f]*(p) - (f*(p) + p^2/(2n))| over the points where both sides are finite.
inline double yosida_conjugate_check(const ConvexScalarFn& f, double n, std::span<const double> p_grid) {
  double err = 0.0;
  for (double p : p_grid) {
    const double lhs = moreau_conjugate(f, n, p);
    const double rhs = conjugate(f, p) + p * p / (2.0 * n);
    if (!std::isfinite(lhs) || !std::isfinite(rhs)) continue;
    err = std::max(err, std::abs(lhs - rhs));
  }
  return err;
}

/// Running-cost Hamiltonian: F(t, p) = e^{-rho t} h*(-e^{rho t} Lp) and its
/// regularizations with h_n = h + |c|^2/(2n).
struct HamiltonianSpec {
  ConvexScalarFn h;
  double rho = 0.0;
  std::optional<double> n;

  void validate() const {
    require(std::isfinite(rho) && rho >= 0.0, "hamiltonian: rho must be >= 0");
    if (n) require(std::isfinite(*n) && *n >= 1.0, "hamiltonian: n must be >= 1");
  }
};

/// Least maximizer over c >= 0 of P c - h_n(c), P = -e^{rho t} Lp; nullopt
/// when the sup is not attained (CRRA/Log with P >= 0, for instance).
inline std::optional<double> feedback(const HamiltonianSpec& spec, double t, double Lp) {
  spec.validate();
  const double P = -std::exp(spec.rho * t) * Lp;
  const auto& h = spec.h;
  if (spec.n) return std::max(0.0, prox(h, 1.0 / *spec.n, *spec.n * P));
  switch (h.tag) {
    case ConvexTag::CRRA:
    case ConvexTag::Log:
      if (P >= 0.0) return std::nullopt;
      return std::pow(-P, -1.0 / h.sigma_eff());
    case ConvexTag::Quadratic:
      return std::max(0.0, h.center + P / h.q);
    case ConvexTag::Linear:
      if (P > h.slope) return std::nullopt;
      return 0.0;
    case ConvexTag::IndicatorNonneg:
      if (P > 0.0) return std::nullopt;
      return 0.0;
    case ConvexTag::Custom: {
      const auto c = detail::invert_subgradient(h, P);
      if (!c) return std::nullopt;
      return std::max(0.0, *c);
    }
  }
  return std::nullopt;
}

inline double hamiltonian(const HamiltonianSpec& spec, double t, double Lp) {
  spec.validate();
  const double e = std::exp(spec.rho * t);
  const double P = -e * Lp;
  if (!spec.n) return conjugate(spec.h, P) / e;
  const double n = *spec.n;
  const double c = prox(spec.h, 1.0 / n, n * P);
  return (P * c - spec.h(c) - c * c / (2.0 * n)) / e;
}

}  // namespace delaydp
