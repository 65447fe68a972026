#pragma once

// Advances a single parasite load over a time interval.
//
// Three schemes, picked from the model:
//   ExactGbm       multiplicative drift and noise, nothing else: log-normal update.
//   ExactStableOde multiplicative drift, no noise, stable jumps: the compensated
//                  small-jump drift is a Bernoulli ODE solved in closed form and
//                  the large jumps are placed by thinning. No time grid.
//   Euler          everything else, on the dt grid, with the stable and pi jumps
//                  split off after the continuous part of each step.

#include <algorithm>
#include <cmath>
#include <limits>

#include "cellfate/classify.hpp"
#include "cellfate/errors.hpp"
#include "cellfate/model.hpp"
#include "cellfate/rng.hpp"

namespace cellfate {

/// Stable jumps of a load x are a Poisson field with intensity x rho(dz),
/// rho(dz) = K z^(-2-b) dz. Jumps below eps_rel * x are replaced by their
/// mean, a drift k x^(1-b); larger ones arrive at rate A x^(-b) with a
/// Pareto law above eps_rel * x.
struct StableTruncation {
  double b = -0.5;
  double K = 0.0;
  double eps_rel = 0.0;
  double A = 0.0;  // large-jump rate coefficient
  double k = 0.0;  // compensating drift coefficient

  static double density_constant(const StableJumpParams& s) { return s.c * s.b * (s.b + 1.0) / std::tgamma(1.0 - s.b); }

  static StableTruncation make(const StableJumpParams& s, double eps_rel) {
    s.validate();
    if (!(eps_rel > 0.0 && eps_rel < 1.0)) throw PreconditionViolated("stable truncation must lie in (0, 1)");
    StableTruncation t;
    t.b = s.b;
    t.K = density_constant(s);
    t.eps_rel = eps_rel;
    t.A = t.K * std::pow(eps_rel, -1.0 - s.b) / (1.0 + s.b);
    t.k = t.K * std::pow(eps_rel, -s.b) / (-s.b);
    return t;
  }

  double large_rate(double x) const { return A * std::pow(x, -b); }

  double jump_size(double x, Rng& rng) const { return eps_rel * x * std::pow(rng.uniform(), -1.0 / (1.0 + b)); }

  /// Per-unit-time shift of E[ln x] from dropping the small-jump fluctuations
  /// (second-order term of ln), at load x.
  double log_bias_rate(double x) const { return K * std::pow(eps_rel, 1.0 - b) * std::pow(x, -b) / (2.0 * (1.0 - b)); }
};

/// Relative truncation that keeps the small-jump bias on E[ln x] below `budget`
/// over [0, t_max] at load scale x_ref, capped at 0.1.
inline double default_stable_truncation(const StableJumpParams& s, double t_max, double x_ref, double budget = 1e-3) {
  const double K = StableTruncation::density_constant(s);
  const double scale = K * std::max(t_max, 1e-12) * std::pow(std::max(x_ref, 1e-300), -s.b) / (2.0 * (1.0 - s.b));
  return std::min(0.1, std::pow(budget / scale, 1.0 / (1.0 - s.b)));
}

namespace detail {

// (e^y - 1) / y, continuous at 0.
inline double expm1_ratio(double y) { return y == 0.0 ? 1.0 : std::expm1(y) / y; }

}  // namespace detail

/// One exact log-normal step of dx = g x dt + sqrt(2 sigma^2) x dB driven by the increment dW.
inline double gbm_step(double g, double sigma, double x, double h, double dW) {
  return x * std::exp((g - sigma * sigma) * h + std::sqrt(2.0) * sigma * dW);
}

/// One Euler-Maruyama step of the continuous part driven by dW; clamps at 0 (absorbing).
inline double euler_step(const ModelFunctions& model, double x, double h, double dW) {
  const double next = x + model.drift(x) * h + std::sqrt(std::max(0.0, 2.0 * model.diffusion2(x))) * dW;
  return next > 0.0 ? next : 0.0;
}

class Integrator {
 public:
  enum class Scheme { ExactGbm, ExactStableOde, Euler };

  Integrator(const ModelFunctions& model, double dt, double cap, double eps_rel = 0.0)
      : model_(&model), dt_(dt), cap_(cap) {
    if (!(dt > 0.0)) throw PreconditionViolated("dt must be > 0");
    if (!(cap > 0.0)) throw PreconditionViolated("explosion cap must be > 0");
    if (model.stable) trunc_ = StableTruncation::make(*model.stable, eps_rel);
    const bool no_pi = model.pi.empty() || model.pi.total_mass() == 0.0;
    if (model.multiplicative && no_pi && !model.stable) {
      scheme_ = Scheme::ExactGbm;
    } else if (model.multiplicative && no_pi && model.sigma_lin == 0.0) {
      scheme_ = Scheme::ExactStableOde;
    } else {
      scheme_ = Scheme::Euler;
    }
  }

  Scheme scheme() const { return scheme_; }
  double cap() const { return cap_; }
  const StableTruncation& truncation() const { return trunc_; }

  /// Load after time h starting from x; +inf once the cap is crossed.
  double advance(double x, double h, Rng& rng) const {
    if (x == 0.0 || x == kInf || h <= 0.0) return x;
    switch (scheme_) {
      case Scheme::ExactGbm:
        return gbm_step(model_->g_lin, model_->sigma_lin, x, h, std::sqrt(h) * rng.normal());
      case Scheme::ExactStableOde:
        return advance_stable_ode(x, h, rng);
      case Scheme::Euler:
        return advance_euler(x, h, rng);
    }
    return x;
  }

 private:
  // Flow of dx/dt = g x + k x^(1-b), through w = x^b (w' = b g w + b k).
  double ode_flow(double x, double t, double g) const {
    const double b = trunc_.b;
    const double y = b * g * t;
    const double w = std::pow(x, b) * std::exp(y) + b * trunc_.k * t * detail::expm1_ratio(y);
    if (!(w > 0.0)) return kInf;
    return std::pow(w, 1.0 / b);
  }

  // Time for the flow to carry x up to target > x; +inf if it never does.
  double ode_time_to(double x, double target, double g) const {
    const double b = trunc_.b;
    const double k = trunc_.k;
    const double w0 = std::pow(x, b);
    const double w1 = std::pow(target, b);
    if (g == 0.0) return (w1 - w0) / (b * k);
    const double ratio = (w1 + k / g) / (w0 + k / g);
    if (!(ratio > 0.0)) return kInf;
    const double t = std::log(ratio) / (b * g);
    return t >= 0.0 ? t : kInf;
  }

  double advance_stable_ode(double x, double h, Rng& rng) const {
    const double g = model_->g_lin;
    double remaining = h;
    while (remaining > 0.0) {
      // Thinning window: until the flow doubles x (or the end). The flow is
      // monotone, so the rate inside is bounded by its larger end value.
      const double window = std::min(remaining, ode_time_to(x, 2.0 * x, g));
      const double x_end = ode_flow(x, window, g);
      if (x_end >= cap_) return kInf;
      const double bound = trunc_.large_rate(std::max(x, x_end));
      const double tau = rng.exponential(bound);
      if (tau >= window) {
        x = x_end;
        remaining -= window;
        continue;
      }
      x = ode_flow(x, tau, g);
      remaining -= tau;
      if (rng.uniform() * bound < trunc_.large_rate(x)) {
        x += trunc_.jump_size(x, rng);
        if (x >= cap_) return kInf;
      }
    }
    return x;
  }

  double advance_euler(double x, double h, Rng& rng) const {
    const ModelFunctions& m = *model_;
    const double mass = m.pi.total_mass();
    double remaining = h;
    while (remaining > 0.0) {
      const double step = remaining < dt_ * (1.0 + 1e-9) ? remaining : dt_;
      remaining -= step;
      const double dW = std::sqrt(step) * rng.normal();
      x = m.multiplicative ? gbm_step(m.g_lin, m.sigma_lin, x, step, dW) : euler_step(m, x, step, dW);
      if (x == 0.0) return 0.0;
      if (m.stable) {
        const double start = x;
        x = ode_flow(x, step, 0.0);
        if (x >= cap_) return kInf;
        const auto n = rng.poisson(trunc_.large_rate(start) * step);
        for (std::int64_t i = 0; i < n; ++i) x += trunc_.jump_size(start, rng);
      }
      if (mass > 0.0) {
        const auto n = rng.poisson(m.jump_rate(x) * mass * step);
        for (std::int64_t i = 0; i < n; ++i) {
          double u = rng.uniform() * mass;
          const Atom* pick = &m.pi.atoms.back();
          for (const auto& a : m.pi.atoms) {
            if (u < a.w) {
              pick = &a;
              break;
            }
            u -= a.w;
          }
          x += pick->z;
        }
      }
      if (x >= cap_) return kInf;
    }
    return x;
  }

  const ModelFunctions* model_;
  double dt_;
  double cap_;
  StableTruncation trunc_{};
  Scheme scheme_ = Scheme::Euler;
};

}  // namespace cellfate
