#pragma once

// Fate classification of the mean number of infected-but-alive cells.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "cellfate/errors.hpp"
#include "cellfate/kernels.hpp"

namespace cellfate {

struct ModelParams {
  double g = 0.0;
  double sigma = 0.0;
  double r = 1.0;
  double q = 0.0;

  void validate() const {
    if (!std::isfinite(g)) throw PreconditionViolated("g must be finite");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw PreconditionViolated("sigma must be finite and >= 0");
    if (!(r > 0.0) || !std::isfinite(r)) throw PreconditionViolated("r must be finite and > 0");
    if (!(q >= 0.0) || !std::isfinite(q)) throw PreconditionViolated("q must be finite and >= 0");
  }
};

/// Spectrally positive stable jumps rho(dz) = b c (b+1) / Gamma(1-b) z^(-2-b) dz.
struct StableJumpParams {
  double b = -0.5;
  double c = -1.0;

  void validate() const {
    if (!(b > -1.0 && b < 0.0)) throw PreconditionViolated("stable index b must lie in (-1, 0)");
    if (!(c < 0.0) || !std::isfinite(c)) throw PreconditionViolated("stable constant c must be finite and < 0");
  }
};

enum class Regime { MeanExtinction, MeanSurvival, CriticalBirthDeath, Unclassified };

inline const char* to_string(Regime regime) {
  switch (regime) {
    case Regime::MeanExtinction: return "MeanExtinction";
    case Regime::MeanSurvival: return "MeanSurvival";
    case Regime::CriticalBirthDeath: return "CriticalBirthDeath";
    case Regime::Unclassified: return "Unclassified";
  }
  return "Unclassified";
}

inline Regime parse_regime(std::string_view s) {
  for (Regime r : {Regime::MeanExtinction, Regime::MeanSurvival, Regime::CriticalBirthDeath, Regime::Unclassified}) {
    if (s == to_string(r)) return r;
  }
  throw ParseError("unknown regime '" + std::string(s) + "'");
}

struct RegimeReport {
  double m = 0.0;
  double lambda_minus = -kInf;
  std::optional<double> tau_hat;
  std::optional<double> phi_tau_hat;
  std::optional<double> d;
  Regime regime = Regime::Unclassified;
  double rate_exp = 0.0;
  double rate_poly = 0.0;
  bool boundary_flag = false;
};

/// Absolute tolerance under which m, d and r - q count as zero.
inline constexpr double kSignTolerance = 1e-12;

// phi(lambda) = lambda (g - sigma^2) + lambda^2 sigma^2 + 2 r (E[Theta^lambda] - 1)
inline double laplace_exponent(const ModelParams& p, const PartitionKernel& k, double lambda) {
  if (lambda == 0.0) return 0.0;
  const double mel = mellin(k, lambda);
  if (mel == kInf) return kInf;
  const double s2 = p.sigma * p.sigma;
  return lambda * (p.g - s2) + lambda * lambda * s2 + 2.0 * p.r * (mel - 1.0);
}

inline double laplace_exponent_d1(const ModelParams& p, const PartitionKernel& k, double lambda) {
  const double s2 = p.sigma * p.sigma;
  return (p.g - s2) + 2.0 * lambda * s2 + 2.0 * p.r * mellin_log(k, lambda);
}

inline double laplace_exponent_d2(const ModelParams& p, const PartitionKernel& k, double lambda) {
  return 2.0 * p.sigma * p.sigma + 2.0 * p.r * mellin_log2(k, lambda);
}

inline double growth_indicator(const ModelParams& p, const PartitionKernel& k) {
  return p.g - p.sigma * p.sigma + 2.0 * p.r * moments(k).log_moment;
}

struct ExponentMinimum {
  double tau_hat;
  double phi_min;
};

/// Unique minimizer of the convex exponent on (lambda_minus, 0).
///
/// phi' is bracketed (phi'(0) = m > 0, phi' -> negative towards lambda_minus),
/// then refined by Newton steps on phi' that fall back to bisection whenever
/// a step leaves the bracket.
inline ExponentMinimum minimize_exponent(const ModelParams& p, const PartitionKernel& k) {
  const double m = growth_indicator(p, k);
  const double lm = lambda_minus(k);
  if (!(m > 0.0)) throw PreconditionViolated("minimize_exponent requires m > 0 (got m = " + std::to_string(m) + ")");
  if (!(lm < 0.0)) throw PreconditionViolated("minimize_exponent requires lambda_minus < 0");

  auto d1 = [&](double lambda) { return laplace_exponent_d1(p, k, lambda); };

  double hi = 0.0;
  double lo = 0.0;
  if (lm == -kInf) {
    lo = -1.0;
    while (d1(lo) >= 0.0) {
      hi = lo;
      lo *= 2.0;
      if (!std::isfinite(lo)) throw SearchExhausted("minimize_exponent: no sign change of phi' found");
    }
  } else {
    double gap = -lm;
    for (;;) {
      gap *= 0.5;
      lo = lm + gap;
      if (lo == lm) throw SearchExhausted("minimize_exponent: no sign change of phi' near lambda_minus");
      if (d1(lo) < 0.0) break;
      hi = lo;
    }
  }

  const double scale = 1.0 + std::fabs(p.g) + p.r + p.sigma * p.sigma;
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    const double f = d1(x);
    if (std::fabs(f) <= 1e-14 * scale) break;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(x)) break;
    const double curv = laplace_exponent_d2(p, k, x);
    double next = (std::isfinite(f) && std::isfinite(curv) && curv > 0.0) ? x - f / curv : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) break;
    x = next;
  }
  return {x, laplace_exponent(p, k, x)};
}

namespace detail {

inline int sign_with_tolerance(double v) {
  if (std::fabs(v) <= kSignTolerance) return 0;
  return v > 0.0 ? 1 : -1;
}

}  // namespace detail

inline RegimeReport classify(const ModelParams& p, const PartitionKernel& k) {
  p.validate();
  RegimeReport out;
  out.m = growth_indicator(p, k);
  out.lambda_minus = lambda_minus(k);
  const int m_sign = detail::sign_with_tolerance(out.m);
  const int rq_sign = detail::sign_with_tolerance(p.r - p.q);
  if (m_sign == 0 || rq_sign == 0) out.boundary_flag = true;

  if (m_sign > 0 && out.lambda_minus < 0.0) {
    const auto [tau, phi_min] = minimize_exponent(p, k);
    out.tau_hat = tau;
    out.phi_tau_hat = phi_min;
    out.d = phi_min + p.r - p.q;
    if (detail::sign_with_tolerance(*out.d) == 0) out.boundary_flag = true;
  }

  if (m_sign < 0) {
    out.rate_exp = p.r - p.q;
    out.rate_poly = 0.0;
  } else if (m_sign == 0) {
    out.rate_exp = p.r - p.q;
    out.rate_poly = -0.5;
  } else if (out.d) {
    out.rate_exp = *out.d;
    out.rate_poly = -1.5;
  } else {
    out.rate_exp = std::numeric_limits<double>::quiet_NaN();
    out.rate_poly = std::numeric_limits<double>::quiet_NaN();
  }

  if (rq_sign == 0) {
    out.regime = Regime::CriticalBirthDeath;
  } else if (m_sign == 0 && out.lambda_minus == 0.0) {
    out.regime = Regime::Unclassified;
  } else if (rq_sign < 0) {
    out.regime = Regime::MeanExtinction;
  } else if (m_sign <= 0) {
    out.regime = Regime::MeanSurvival;
  } else if (!out.d) {
    out.regime = Regime::Unclassified;
  } else {
    out.regime = detail::sign_with_tolerance(*out.d) > 0 ? Regime::MeanSurvival : Regime::MeanExtinction;
  }
  return out;
}

/// Survival criterion from bounding parameters g(x) <= g x, q(x) <= q and a dominating kernel.
inline bool sufficient_survival(const ModelParams& bounds, const PartitionKernel& dominator) {
  bounds.validate();
  if (!(bounds.q < bounds.r)) throw PreconditionViolated("sufficient_survival requires q < r");
  const double m = growth_indicator(bounds, dominator);
  if (m <= 0.0) return true;
  if (!(lambda_minus(dominator) < 0.0)) return false;
  return minimize_exponent(bounds, dominator).phi_min + bounds.r - bounds.q > 0.0;
}

enum class ThresholdParam { q, r, g, sigma };

inline ThresholdParam parse_threshold_param(std::string_view s) {
  if (s == "q") return ThresholdParam::q;
  if (s == "r") return ThresholdParam::r;
  if (s == "g") return ThresholdParam::g;
  if (s == "sigma") return ThresholdParam::sigma;
  throw ParseError("unknown threshold parameter '" + std::string(s) + "' (expected q, r, g or sigma)");
}

namespace detail {

// d = phi(tau_hat) + r - q, assuming m > 0.
inline double survival_index(const ModelParams& p, const PartitionKernel& k) {
  return minimize_exponent(p, k).phi_min + p.r - p.q;
}

// Root of a monotone function on the open interval (lo, hi); endpoints are never evaluated.
template <class F>
double bisect_open(F&& increasing_in_x, double lo, double hi) {
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (hi - lo <= 1e-13 * std::fabs(mid)) break;
    if (increasing_in_x(mid) > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Limiting value of one parameter at which the mean fate flips, the others held fixed.
///
/// q >= q_lim, r <= r_lim, g >= g_lim and sigma < sigma_lim give mean extinction.
/// Always found by bisection on the survival index, which is monotone in each
/// parameter; no closed forms are used here.
inline double threshold(ThresholdParam which, const ModelParams& params, const PartitionKernel& k) {
  const KernelMoments mom = moments(k);
  const double elog = mom.log_moment;  // < 0
  const double s2 = params.sigma * params.sigma;
  switch (which) {
    case ThresholdParam::q: {
      ModelParams p = params;
      p.validate();
      if (growth_indicator(p, k) <= 0.0) return p.r;
      const double c = minimize_exponent(p, k).phi_min + p.r;
      return c <= 0.0 ? 0.0 : c;
    }
    case ThresholdParam::r: {
      ModelParams p = params;
      const double eta = (p.g - s2) / (-2.0 * elog);
      if (eta <= p.q) return p.q;
      auto d_of_r = [&](double r) {
        p.r = r;
        return detail::survival_index(p, k);
      };
      return detail::bisect_open(d_of_r, p.q, eta);
    }
    case ThresholdParam::g: {
      ModelParams p = params;
      if (p.r <= p.q) return 0.0;
      const double g_m = s2 - 2.0 * p.r * elog;
      auto minus_d_of_g = [&](double g) {
        p.g = g;
        return -detail::survival_index(p, k);
      };
      double step = std::max(1.0, std::fabs(g_m));
      double hi = g_m + step;
      while (minus_d_of_g(hi) < 0.0) {
        step *= 2.0;
        hi = g_m + step;
        if (!std::isfinite(hi)) throw SearchExhausted("threshold(g): no upper bracket");
      }
      return detail::bisect_open(minus_d_of_g, g_m, hi);
    }
    case ThresholdParam::sigma: {
      ModelParams p = params;
      if (p.r <= p.q) return kInf;
      const double room = p.g + 2.0 * p.r * elog;  // m at sigma = 0
      if (room <= 0.0) return 0.0;
      p.sigma = 0.0;
      if (detail::survival_index(p, k) > 0.0) return 0.0;
      auto d_of_s2 = [&](double v) {
        p.sigma = std::sqrt(v);
        return detail::survival_index(p, k);
      };
      return std::sqrt(detail::bisect_open(d_of_s2, 0.0, room));
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double x0_residual(double x, double q_over_r) { return x * (1.0 + std::numbers::ln2 - std::log(x)) - (1.0 + q_over_r); }

/// Root x0 > 2 of x (1 + ln 2 - ln x) = 1 + q/r.
inline double x0(double q_over_r) {
  if (!(q_over_r >= 0.0 && q_over_r < 1.0)) throw PreconditionViolated("x0 requires q/r in [0, 1)");
  auto h = [&](double x) { return x0_residual(x, q_over_r); };
  double lo = 2.0;
  double hi = 4.0;
  while (h(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (h(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::fabs(h(lo)) <= std::fabs(h(hi)) ? lo : hi;
}

/// Closed-form g_lim(0, r, q) for the uniform kernel.
inline double g_lim_uniform(double r, double q) {
  if (!(r > 0.0 && q >= 0.0 && q < r)) throw PreconditionViolated("g_lim_uniform requires 0 <= q < r");
  return 3.0 * r - q + 2.0 * std::sqrt(2.0 * r * (r - q));
}

/// Closed-form g_lim(0, r, q) for equal sharing.
inline double g_lim_equal(double r, double q) {
  if (!(r > 0.0 && q >= 0.0 && q < r)) throw PreconditionViolated("g_lim_equal requires 0 <= q < r");
  return r * x0(q / r) * std::numbers::ln2;
}

struct ConstructedKernel {
  PartitionKernel kernel;
  RegimeReport report;
  int iterations;
};

/// Symmetric kernel with E[min(Theta, 1 - Theta)] = vartheta under which the
/// mean number of cells grows (sigma = 0, q < r).
///
/// One mode sinks towards 0 carrying mass p1 while the other is placed to keep
/// the minimal share at vartheta. The first pass uses p1 = z1^(1/ln ln(1/z1))
/// with z1 halving from vartheta/8; when doubles run out before survival is
/// reached, the second pass fixes p1 and pushes z1 = exp(-L) further down in
/// log space, where m eventually turns negative.
inline ConstructedKernel construct_survival_kernel(const ModelParams& params, double vartheta) {
  params.validate();
  if (params.sigma != 0.0) throw PreconditionViolated("construct_survival_kernel requires sigma = 0");
  if (!(params.q < params.r)) throw PreconditionViolated("construct_survival_kernel requires q < r");
  if (!(vartheta > 0.0 && vartheta < 0.5)) throw PreconditionViolated("construct_survival_kernel requires vartheta in (0, 1/2)");

  if (params.g <= -params.r * std::log(vartheta * (1.0 - vartheta))) {
    auto k = PartitionKernel::deterministic(vartheta);
    return {k, classify(params, k), 0};
  }

  double last_d = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  auto attempt = [&](std::vector<Mode> modes) -> std::optional<ConstructedKernel> {
    ++iterations;
    auto k = PartitionKernel::from_modes(std::move(modes));
    auto rep = classify(params, k);
    if (rep.d) last_d = *rep.d;
    if (rep.regime == Regime::MeanSurvival) return ConstructedKernel{k, rep, iterations};
    return std::nullopt;
  };

  for (double z1 = vartheta / 8.0; z1 > 1e-300; z1 *= 0.5) {
    const double lz = std::log(z1);
    const double p1 = std::exp(lz / std::log(-lz));
    if (!(p1 < 0.5)) continue;
    const double z2 = (vartheta - 2.0 * z1 * p1) / (1.0 - 2.0 * p1);
    if (!(z2 > 0.0 && z2 < 0.5)) continue;
    if (auto found = attempt({{lz, p1}, {std::log(z2), 0.5 - p1}})) return *found;
  }

  const double p1 = std::min(0.25 - 0.5 * vartheta, (params.r - params.q) / (4.0 * params.r));
  for (double L = 700.0; L <= 1e300; L *= 2.0) {
    const double z1 = std::exp(-L);
    const double z2 = (vartheta - 2.0 * z1 * p1) / (1.0 - 2.0 * p1);
    if (auto found = attempt({{-L, p1}, {std::log(z2), 0.5 - p1}})) return *found;
  }
  throw SearchExhausted("construct_survival_kernel: no surviving kernel found (last d = " + std::to_string(last_d) + ")");
}

}  // namespace cellfate
