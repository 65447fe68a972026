#pragma once

// Spinal reduction: a uniformly sampled lineage Y follows the cell dynamics
// and, at rate 2r, keeps a Theta ~ kernel fraction of its load. For the
// multiplicative model, ln Y is the Levy process
//   L_t = (g - sigma^2) t + sqrt(2 sigma^2) B_t + sum of ln Theta_i,
// and with stable jumps the probability that Y is still finite at t is
//   E[exp(-x (b c int_0^t exp(-b L_s) ds)^(-1/b))].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cellfate/classify.hpp"
#include "cellfate/errors.hpp"
#include "cellfate/integrator.hpp"
#include "cellfate/kernels.hpp"
#include "cellfate/model.hpp"
#include "cellfate/parallel.hpp"
#include "cellfate/rng.hpp"
#include "cellfate/simulate.hpp"

namespace cellfate {

struct SpineConfig {
  double t_max = 1.0;
  double dt = 0.0;  // 0: 1e-3 * t_max
  std::size_t reps = 1000;
  std::uint64_t seed = 1;
  double x0 = 1.0;
  double explosion_cap = 0.0;  // 0: 1e12 * max(x0, 1)
  double stable_trunc = 0.0;   // 0: default_stable_truncation
  unsigned threads = 1;

  double resolved_dt() const { return dt > 0.0 ? dt : 1e-3 * std::max(t_max, 1e-9); }
  double resolved_cap() const { return explosion_cap > 0.0 ? explosion_cap : 1e12 * std::max(x0, 1.0); }

  void validate() const {
    if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw PreconditionViolated("t_max must be finite and >= 0");
    if (dt < 0.0) throw PreconditionViolated("dt must be > 0");
    if (reps < 1) throw PreconditionViolated("reps must be >= 1");
    if (!(x0 >= 0.0) || !std::isfinite(x0)) throw PreconditionViolated("x0 must be finite and >= 0");
  }
};

struct Estimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t reps = 0;
};

struct LevyPath {
  double t_end = 0.0;
  double drift = 0.0;      // g - sigma^2
  double diffusion = 0.0;  // sqrt(2 sigma^2)
  std::vector<double> jump_times;
  std::vector<double> jump_sizes;  // ln Theta_i
  // Knots: 0, t_end, every jump time, every extra knot and (when diffusion > 0) the dt grid.
  std::vector<double> times;
  std::vector<double> brownian;  // B at each knot
  std::vector<double> left;      // L just before each knot
  std::vector<double> right;     // L at each knot (after a jump there)

  double value_at_end() const { return right.empty() ? 0.0 : right.back(); }
};

/// Samples L on [0, t_end]. Extra knots let callers read the integral at intermediate times.
inline LevyPath sample_levy_path(const ModelParams& p, const PartitionKernel& k, double t_end, double dt, Rng& rng,
                                 const std::vector<double>& extra_knots = {}) {
  LevyPath path;
  path.t_end = t_end;
  path.drift = p.g - p.sigma * p.sigma;
  path.diffusion = std::sqrt(2.0) * p.sigma;
  for (double t = rng.exponential(2.0 * p.r); t < t_end; t += rng.exponential(2.0 * p.r)) {
    path.jump_times.push_back(t);
    path.jump_sizes.push_back(std::log(sample(k, rng)));
  }
  std::vector<double> knots = {0.0, t_end};
  knots.insert(knots.end(), path.jump_times.begin(), path.jump_times.end());
  for (double e : extra_knots) {
    if (e > 0.0 && e < t_end) knots.push_back(e);
  }
  if (path.diffusion > 0.0) {
    const auto n = static_cast<std::size_t>(std::ceil(t_end / dt));
    for (std::size_t i = 1; i < n; ++i) knots.push_back(static_cast<double>(i) * dt);
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  path.times = std::move(knots);

  const std::size_t n = path.times.size();
  path.brownian.assign(n, 0.0);
  path.left.assign(n, 0.0);
  path.right.assign(n, 0.0);
  double jumps = 0.0;
  std::size_t next_jump = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = path.times[i];
    if (i > 0) {
      const double h = t - path.times[i - 1];
      path.brownian[i] = path.brownian[i - 1] + (path.diffusion > 0.0 ? std::sqrt(h) * rng.normal() : 0.0);
    }
    path.left[i] = path.drift * t + path.diffusion * path.brownian[i] + jumps;
    if (next_jump < path.jump_times.size() && path.jump_times[next_jump] == t) {
      jumps += path.jump_sizes[next_jump++];
    }
    path.right[i] = path.drift * t + path.diffusion * path.brownian[i] + jumps;
  }
  return path;
}

/// Running integral of exp(-b L_s) at every knot: exact between knots when the
/// path is piecewise linear, trapezoid otherwise.
inline std::vector<double> levy_exp_integral(const LevyPath& path, double b) {
  std::vector<double> out(path.times.size(), 0.0);
  for (std::size_t i = 0; i + 1 < path.times.size(); ++i) {
    const double h = path.times[i + 1] - path.times[i];
    double piece;
    if (path.diffusion == 0.0) {
      piece = std::exp(-b * path.right[i]) * h * detail::expm1_ratio(-b * path.drift * h);
    } else {
      piece = 0.5 * h * (std::exp(-b * path.right[i]) + std::exp(-b * path.left[i + 1]));
    }
    out[i + 1] = out[i] + piece;
  }
  return out;
}

inline double nonexplosion_from_integral(double integral, double x, const StableJumpParams& s) {
  if (x == 0.0 || integral == 0.0) return 1.0;
  return std::exp(-x * std::pow(s.b * s.c * integral, -1.0 / s.b));
}

/// P_x(Y_t < inf) for each requested time, from the same Levy paths.
inline std::vector<Estimate> nonexplosion_curve(const ModelParams& p, const PartitionKernel& k,
                                                const std::optional<StableJumpParams>& stable, const std::vector<double>& times,
                                                double x, const SpineConfig& cfg) {
  p.validate();
  cfg.validate();
  if (!(x >= 0.0)) throw PreconditionViolated("x must be >= 0");
  for (double t : times) {
    if (!(t >= 0.0)) throw PreconditionViolated("times must be >= 0");
  }
  std::vector<Estimate> out(times.size());
  if (!stable || x == 0.0 || times.empty()) {
    for (auto& e : out) e = {1.0, 0.0, cfg.reps};
    return out;
  }
  stable->validate();
  const double t_end = *std::max_element(times.begin(), times.end());
  if (t_end == 0.0) {
    for (auto& e : out) e = {1.0, 0.0, cfg.reps};
    return out;
  }
  const double dt = cfg.dt > 0.0 ? cfg.dt : 1e-3 * t_end;
  std::vector<std::vector<double>> values(times.size(), std::vector<double>(cfg.reps));
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t rep) {
    Rng rng = Rng::stream(cfg.seed, rep);
    const LevyPath path = sample_levy_path(p, k, t_end, dt, rng, times);
    const auto integral = levy_exp_integral(path, stable->b);
    for (std::size_t j = 0; j < times.size(); ++j) {
      const auto at = std::lower_bound(path.times.begin(), path.times.end(), times[j]) - path.times.begin();
      values[j][rep] = nonexplosion_from_integral(integral[at], x, *stable);
    }
  });
  for (std::size_t j = 0; j < times.size(); ++j) {
    const auto s = mean_se(values[j]);
    out[j] = {s.mean, s.std_error, s.n};
  }
  return out;
}

inline Estimate nonexplosion_probability(const ModelParams& p, const PartitionKernel& k,
                                         const std::optional<StableJumpParams>& stable, double t, double x,
                                         const SpineConfig& cfg) {
  if (t == 0.0 || x == 0.0) return {1.0, 0.0, cfg.reps};
  return nonexplosion_curve(p, k, stable, {t}, x, cfg).front();
}

/// E[number of cells with finite load at t] = e^((r-q)t) P_x(Y_t < inf).
inline Estimate mean_cells_via_spine(const ModelParams& p, const PartitionKernel& k,
                                     const std::optional<StableJumpParams>& stable, double t, double x,
                                     const SpineConfig& cfg) {
  const Estimate e = nonexplosion_probability(p, k, stable, t, x, cfg);
  const double growth = std::exp((p.r - p.q) * t);
  return {growth * e.estimate, growth * e.std_error, e.reps};
}

/// Y at time t started from x, with the cell dynamics between fraction events.
inline double spine_terminal(const ModelFunctions& model, const Integrator& integ, double r, double t, double x, Rng& rng) {
  double y = x;
  double s = 0.0;
  for (;;) {
    const double tau = rng.exponential(2.0 * r);
    if (s + tau >= t) return integ.advance(y, t - s, rng);
    y = integ.advance(y, tau, rng);
    s += tau;
    if (y != kInf && y > 0.0) y *= sample(model.kernel_at(y), rng);
  }
}

struct SpinePoint {
  double t;
  double y;
};

/// One path of Y on the grid 0, dt, 2 dt, ..., t_max for replication `rep`.
inline std::vector<SpinePoint> simulate_spine(const ModelParams& p, const PartitionKernel& k,
                                              const std::optional<StableJumpParams>& stable, const SpineConfig& cfg,
                                              std::uint64_t rep = 0) {
  p.validate();
  cfg.validate();
  const ModelFunctions model = ModelFunctions::make_multiplicative(p.g, p.sigma, k, stable);
  const double dt = cfg.resolved_dt();
  const double trunc = stable ? (cfg.stable_trunc > 0.0 ? cfg.stable_trunc : default_stable_truncation(*stable, cfg.t_max, cfg.x0)) : 0.0;
  const Integrator integ(model, dt, cfg.resolved_cap(), trunc);
  Rng rng = Rng::stream(cfg.seed, rep);
  std::vector<SpinePoint> out = {{0.0, cfg.x0}};
  double y = cfg.x0;
  double s = 0.0;
  double next_jump = rng.exponential(2.0 * p.r);
  const auto n = static_cast<std::size_t>(std::ceil(cfg.t_max / dt - 1e-9));
  for (std::size_t i = 1; i <= n; ++i) {
    const double t = std::min(cfg.t_max, static_cast<double>(i) * dt);
    while (next_jump < t) {
      y = integ.advance(y, next_jump - s, rng);
      s = next_jump;
      if (y != kInf && y > 0.0) y *= sample(k, rng);
      next_jump += rng.exponential(2.0 * p.r);
    }
    y = integ.advance(y, t - s, rng);
    s = t;
    out.push_back({t, y});
  }
  return out;
}

enum class MtoFunctional { ConstantOne, ExpNeg, IndicatorFinite };

inline MtoFunctional parse_mto_functional(std::string_view s) {
  if (s == "constant_one") return MtoFunctional::ConstantOne;
  if (s == "exp_neg") return MtoFunctional::ExpNeg;
  if (s == "indicator_finite") return MtoFunctional::IndicatorFinite;
  throw ParseError("unknown functional '" + std::string(s) + "' (expected constant_one, exp_neg or indicator_finite)");
}

inline const char* to_string(MtoFunctional f) {
  switch (f) {
    case MtoFunctional::ConstantOne: return "constant_one";
    case MtoFunctional::ExpNeg: return "exp_neg";
    case MtoFunctional::IndicatorFinite: return "indicator_finite";
  }
  return "constant_one";
}

inline double apply_functional(MtoFunctional f, double x) {
  switch (f) {
    case MtoFunctional::ConstantOne: return 1.0;
    case MtoFunctional::ExpNeg: return std::exp(-x);
    case MtoFunctional::IndicatorFinite: return x == kInf ? 0.0 : 1.0;
  }
  return 0.0;
}

struct MtoReport {
  Estimate lhs;  // population side: E[sum over present cells of f(x)]
  Estimate rhs;  // spine side: e^((r-q)t) E[f(Y_t)]
  double z_score = 0.0;
  double stable_trunc = 0.0;
};

/// Both sides of the many-to-one identity for f(X_t), estimated independently.
inline MtoReport many_to_one_check(const ModelParams& p, const PartitionKernel& k, const std::optional<StableJumpParams>& stable,
                                   MtoFunctional f, double t, double x, const SpineConfig& cfg, double budget = 1e9) {
  p.validate();
  cfg.validate();
  if (std::exp(p.r * t) * static_cast<double>(cfg.reps) > budget) {
    throw BudgetExceeded("many_to_one_check: e^(r t) * reps = " + std::to_string(std::exp(p.r * t) * cfg.reps) +
                         " exceeds the budget " + std::to_string(budget));
  }
  const ModelFunctions model = ModelFunctions::make_multiplicative(p.g, p.sigma, k, stable);
  MtoReport rep;
  rep.stable_trunc = stable ? (cfg.stable_trunc > 0.0 ? cfg.stable_trunc : default_stable_truncation(*stable, t, x)) : 0.0;

  SimConfig sim;
  sim.t_max = t;
  sim.dt = cfg.resolved_dt();
  sim.reps = cfg.reps;
  sim.seed = cfg.seed;
  sim.x0 = x;
  sim.explosion_cap = cfg.resolved_cap();
  sim.stable_trunc = rep.stable_trunc > 0.0 ? rep.stable_trunc : 0.0;
  sim.record_times = {t};
  sim.threads = cfg.threads;
  sim.max_cells = static_cast<std::uint64_t>(std::max(1e6, 1000.0 * std::exp(p.r * t)));
  const auto traj = simulate_population(model, p.r, DeathRate{p.q, {}, 0.0}, sim);
  if (traj.aborted) throw BudgetExceeded("many_to_one_check: a replication exceeded max_cells");
  std::vector<double> lhs(cfg.reps);
  for (std::size_t i = 0; i < cfg.reps; ++i) {
    const auto& pt = traj.reps[i].points.front();
    switch (f) {
      case MtoFunctional::ConstantOne: lhs[i] = static_cast<double>(pt.N); break;
      case MtoFunctional::ExpNeg: lhs[i] = pt.sum_exp_neg; break;
      case MtoFunctional::IndicatorFinite: lhs[i] = static_cast<double>(pt.C); break;
    }
  }
  const auto ls = mean_se(lhs);
  rep.lhs = {ls.mean, ls.std_error, ls.n};

  const Integrator integ(model, sim.dt, sim.explosion_cap, rep.stable_trunc);
  std::uint64_t mix = cfg.seed ^ 0xA5A5A5A5DEADBEEFULL;
  const std::uint64_t spine_seed = splitmix64(mix);
  std::vector<double> rhs(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t i) {
    Rng rng = Rng::stream(spine_seed, i);
    rhs[i] = apply_functional(f, spine_terminal(model, integ, p.r, t, x, rng));
  });
  const auto rs = mean_se(rhs);
  const double growth = std::exp((p.r - p.q) * t);
  rep.rhs = {growth * rs.mean, growth * rs.std_error, rs.n};

  const double se = std::hypot(rep.lhs.std_error, rep.rhs.std_error);
  const double diff = std::fabs(rep.lhs.estimate - rep.rhs.estimate);
  rep.z_score = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : kInf);
  return rep;
}

/// psi_0(lambda) = c lambda^(1+b) + sum_k w_k (exp(-lambda z_k) - 1 + lambda z_k).
inline double psi0(double lambda, const StableJumpParams& s, const DiscreteMeasure& pi) {
  if (!(lambda >= 0.0)) throw DomainError("psi0 requires lambda >= 0");
  double v = s.c * std::pow(lambda, 1.0 + s.b);
  for (const auto& a : pi.atoms) v += a.w * (std::expm1(-lambda * a.z) + lambda * a.z);
  return v;
}

}  // namespace cellfate
