#pragma once

// Grid checks of the small- and large-load hypotheses on the cell dynamics.
// These are limits in x, so a finite grid can only say whether the
// inequality holds at the points it was shown.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cellfate/errors.hpp"
#include "cellfate/kernels.hpp"
#include "cellfate/model.hpp"
#include "cellfate/quadrature.hpp"

namespace cellfate {

enum class Verdict { HoldsOnGrid, FailsOnGrid, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::HoldsOnGrid: return "holds_on_grid";
    case Verdict::FailsOnGrid: return "fails_on_grid";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct Evaluation {
  double x;
  double lhs;
  double rhs;
};

struct Witness {
  double x = 0.0;
  double value = 0.0;  // c for LB, eta for the drift criteria, lhs - rhs otherwise
};

struct ConditionReport {
  std::string condition;
  Verdict verdict = Verdict::Inconclusive;
  std::string message;
  std::optional<Witness> witness;
  std::vector<Evaluation> evaluations;
};

namespace detail {

// g(x)/x - a sigma^2(x)/x^2 - 2r (1 - E[Theta^(1-a)](x)) / (1 - a)
inline double small_load_drift(const ModelFunctions& m, double r, double a, double x) {
  const double mel = mellin(m.kernel_at(x), 1.0 - a);
  return m.drift(x) / x - a * m.diffusion2(x) / x / x - 2.0 * r * (1.0 - mel) / (1.0 - a);
}

inline void check_a(double a) {
  if (!(a > 0.0 && a < 1.0)) throw PreconditionViolated("a must lie in (0, 1)");
}

}  // namespace detail

/// Condition for the load to be able to reach 0:
///   lhs(x) <= -ln(1/x) (ln ln(1/x))^(1+eta)  on a grid of points below 1/e.
inline ConditionReport check_LN0(const ModelFunctions& m, double r, double a, double eta, const std::vector<double>& x_grid) {
  detail::check_a(a);
  if (!(eta > 0.0)) throw PreconditionViolated("eta must be > 0");
  ConditionReport rep;
  rep.condition = "LN0";
  if (x_grid.empty()) {
    rep.message = "empty grid";
    return rep;
  }
  for (double x : x_grid) {
    if (!(x > 0.0 && x < std::exp(-1.0))) throw DomainError("LN0 grid points must lie in (0, 1/e)");
  }
  rep.verdict = Verdict::HoldsOnGrid;
  for (double x : x_grid) {
    const double L = std::log(1.0 / x);
    const double lhs = detail::small_load_drift(m, r, a, x);
    const double rhs = -L * std::pow(std::log(L), 1.0 + eta);
    rep.evaluations.push_back({x, lhs, rhs});
    if (!(lhs <= rhs) && rep.verdict == Verdict::HoldsOnGrid) {
      rep.verdict = Verdict::FailsOnGrid;
      rep.witness = Witness{x, lhs - rhs};
    }
  }
  return rep;
}

/// I_a(x) = (a / x^2) sum_k w_k z_k^2 int_0^1 (1 - v) / (1 + z_k v / x)^(1+a) dv.
inline double I_a(const ModelFunctions& m, double a, double x) {
  detail::check_a(a);
  if (!(x > 0.0)) throw PreconditionViolated("I_a requires x > 0");
  double sum = 0.0;
  for (const auto& atom : m.pi.atoms) {
    const double ratio = atom.z / x;
    const double inner =
        quadrature::integrate([&](double v) { return (1.0 - v) / std::pow(1.0 + ratio * v, 1.0 + a); }, 0.0, 1.0, 1e-13);
    sum += atom.w * atom.z * atom.z * inner;
  }
  return a / (x * x) * sum;
}

/// Large-load non-explosion condition: lhs(x) - p(x) I_a(x) = -f(x) + o(ln x).
/// Holds on the grid when |lhs + f| / ln x is non-increasing along the grid
/// and below `ratio_limit` at its last point.
inline ConditionReport check_SNinf(const ModelFunctions& m, double r, double a, const ScalarFn& f_margin,
                                   const std::vector<double>& x_grid, double ratio_limit = 0.1) {
  detail::check_a(a);
  ConditionReport rep;
  rep.condition = "SNinf";
  if (x_grid.empty()) {
    rep.message = "empty grid";
    return rep;
  }
  for (double x : x_grid) {
    if (!(x > 1.0)) throw DomainError("SNinf grid points must exceed 1");
  }
  double previous = kInf;
  bool decreasing = true;
  for (double x : x_grid) {
    const double lhs = detail::small_load_drift(m, r, a, x) - m.jump_rate(x) * I_a(m, a, x);
    const double residual = lhs + f_margin(x);
    const double ratio = std::fabs(residual) / std::log(x);
    rep.evaluations.push_back({x, lhs, -f_margin(x)});
    if (ratio > previous * (1.0 + 1e-12) + 1e-300) {
      decreasing = false;
      if (!rep.witness) rep.witness = Witness{x, ratio};
    }
    previous = ratio;
  }
  const double last = previous;
  if (decreasing && last < ratio_limit) {
    rep.verdict = Verdict::HoldsOnGrid;
  } else {
    rep.verdict = Verdict::FailsOnGrid;
    if (!rep.witness) rep.witness = Witness{x_grid.back(), last};
    rep.message = decreasing ? "remainder ratio at the last grid point exceeds the limit" : "remainder ratio is not decreasing";
  }
  return rep;
}

/// Lower bound of the load-dependent kernel by one fixed symmetric law, in the
/// quantile order: Q_x(u) >= c Q_ref(u) for every grid load and probe level.
/// The reference is the kernel at the median grid load or equal sharing,
/// whichever gives the larger c. Letting any member serve would make the check
/// vacuous: the member with the smallest shares always dominates itself.
inline ConditionReport check_LB(const KernelOfX& kernel_of_x, const std::vector<double>& x_grid,
                                const std::vector<double>& theta_probe, double c_floor = 1e-3) {
  ConditionReport rep;
  rep.condition = "LB";
  if (x_grid.empty() || theta_probe.empty()) {
    rep.message = "empty grid";
    return rep;
  }
  std::vector<std::vector<double>> q(x_grid.size());
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    const auto k = kernel_of_x(x_grid[i]);
    for (double u : theta_probe) q[i].push_back(quantile(k, u));
  }
  const std::size_t mid = x_grid.size() / 2;
  const std::vector<double> refs[2] = {q[mid], std::vector<double>(theta_probe.size(), 0.5)};

  double best_c = -1.0;
  std::size_t best_ref = 0, worst = 0;
  for (std::size_t r = 0; r < 2; ++r) {
    double c = kInf;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      for (std::size_t j = 0; j < theta_probe.size(); ++j) {
        const double ratio = q[i][j] / refs[r][j];
        if (ratio < c) {
          c = ratio;
          arg = i;
        }
      }
    }
    c = std::min(c, 1.0);
    if (c > best_c) {
      best_c = c;
      best_ref = r;
      worst = arg;
    }
  }

  for (std::size_t i = 0; i < q.size(); ++i) {
    double c = kInf;
    for (std::size_t j = 0; j < theta_probe.size(); ++j) c = std::min(c, q[i][j] / refs[best_ref][j]);
    rep.evaluations.push_back({x_grid[i], c, best_c});
  }
  rep.witness = Witness{x_grid[worst], best_c};
  rep.message = best_ref == 0 ? "reference: kernel at x = " + detail::format_double(x_grid[mid]) : "reference: equal sharing";
  rep.verdict = best_c >= c_floor ? Verdict::HoldsOnGrid : Verdict::FailsOnGrid;
  return rep;
}

enum class DriftMode { Growth, Decay, DecayFull };

inline DriftMode parse_drift_mode(std::string_view s) {
  if (s == "i" || s == "drift_i") return DriftMode::Growth;
  if (s == "ii" || s == "drift_ii") return DriftMode::Decay;
  if (s == "iii" || s == "drift_iii") return DriftMode::DecayFull;
  throw ParseError("unknown drift criterion '" + std::string(s) + "' (expected i, ii or iii)");
}

/// The drift expression of each criterion at load x:
///   i, ii: g(x)/x + 2r E[ln Theta(x)]
///   iii:   g(x)/x - sigma^2(x)/x^2 + 2r E[ln Theta(x)] - p(x) sum_k w_k (z_k/x - ln(1 + z_k/x))
inline double drift_expression(const ModelFunctions& m, double r, DriftMode mode, double x) {
  double v = m.drift(x) / x + 2.0 * r * moments(m.kernel_at(x)).log_moment;
  if (mode == DriftMode::DecayFull) {
    v -= m.diffusion2(x) / x / x;
    double jumps = 0.0;
    for (const auto& a : m.pi.atoms) {
      const double y = a.z / x;
      jumps += a.w * (y - std::log1p(y));
    }
    v -= m.jump_rate(x) * jumps;
  }
  return v;
}

/// Largest eta with expression > eta (mode i) or expression < -eta (ii, iii)
/// at every grid point; fails when that eta is not positive.
inline ConditionReport drift_criterion(const ModelFunctions& m, double r, DriftMode mode, const std::vector<double>& x_grid) {
  ConditionReport rep;
  rep.condition = mode == DriftMode::Growth ? "drift_i" : mode == DriftMode::Decay ? "drift_ii" : "drift_iii";
  if (m.pi.divergent_first_moment || !std::isfinite(m.pi.first_moment())) {
    rep.verdict = Verdict::FailsOnGrid;
    rep.message = "jump law violates ∫zπ(dz) < ∞";
    return rep;
  }
  if (x_grid.empty()) {
    rep.message = "empty grid";
    return rep;
  }
  const bool upper = mode == DriftMode::Growth;
  double eta = kInf;
  double arg = x_grid.front();
  for (double x : x_grid) {
    if (!(x > 0.0)) throw DomainError("drift criterion grid points must be > 0");
    const double v = drift_expression(m, r, mode, x);
    const double margin = upper ? v : -v;
    rep.evaluations.push_back({x, v, 0.0});
    if (margin < eta) {
      eta = margin;
      arg = x;
    }
  }
  rep.witness = Witness{arg, eta};
  rep.verdict = eta > 0.0 ? Verdict::HoldsOnGrid : Verdict::FailsOnGrid;
  return rep;
}

}  // namespace cellfate
