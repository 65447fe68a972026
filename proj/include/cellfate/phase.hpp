#pragma once

// Parameter sweeps: regime maps over (g/r, kernel parameter) pairing each
// symmetric Beta kernel with the two-point kernel of equal minimal share, and
// survival boundaries of random finite-point kernels.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cellfate/classify.hpp"
#include "cellfate/errors.hpp"
#include "cellfate/kernels.hpp"
#include "cellfate/parallel.hpp"
#include "cellfate/rng.hpp"

namespace cellfate {

enum class PhaseFamily { Deterministic, Beta };

inline PhaseFamily parse_phase_family(std::string_view s) {
  if (s == "deterministic" || s == "det") return PhaseFamily::Deterministic;
  if (s == "beta") return PhaseFamily::Beta;
  throw ParseError("unknown phase family '" + std::string(s) + "' (expected deterministic or beta)");
}

struct AxisSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t steps = 2;

  double at(std::size_t i) const {
    return steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
};

struct PhaseSpec {
  PhaseFamily family = PhaseFamily::Beta;
  // g/r axis; with log_scaled the axis values are ln(g/r).
  AxisSpec g_axis{0.0, 6.0, 200};
  bool log_scaled = true;
  // alpha for the beta family, z for the deterministic one.
  AxisSpec param_axis{-0.99, 20.0, 200};
  double q_over_r = 0.0;
  unsigned threads = 1;

  static PhaseSpec defaults(PhaseFamily family) {
    PhaseSpec s;
    s.family = family;
    if (family == PhaseFamily::Deterministic) s.param_axis = {z_of_alpha(-0.99), z_of_alpha(20.0), 200};
    return s;
  }

  void validate() const {
    if (g_axis.steps < 1 || param_axis.steps < 1) throw PreconditionViolated("axes need at least one step");
    if (!(g_axis.hi > g_axis.lo) && g_axis.steps > 1) throw PreconditionViolated("g/r range must be non-degenerate");
    if (!(param_axis.hi > param_axis.lo) && param_axis.steps > 1) throw PreconditionViolated("parameter range must be non-degenerate");
    if (!(q_over_r >= 0.0 && q_over_r < 1.0)) throw PreconditionViolated("q/r must lie in [0, 1)");
    if (family == PhaseFamily::Beta && !(param_axis.lo > -1.0)) throw PreconditionViolated("alpha must exceed -1");
    if (family == PhaseFamily::Deterministic && !(param_axis.lo > 0.0 && param_axis.hi <= 0.5)) {
      throw PreconditionViolated("z must lie in (0, 1/2]");
    }
  }
};

/// Largest alpha handled when inverting z_of_alpha; above it the Beta kernel is
/// replaced by equal sharing.
inline constexpr double kMaxAlpha = 1e6;

/// Inverse of z_of_alpha; +inf for z at or above z_of_alpha(kMaxAlpha).
inline double alpha_of_z(double z) {
  if (!(z > 0.0 && z <= 0.5)) throw PreconditionViolated("alpha_of_z requires z in (0, 1/2]");
  if (z >= z_of_alpha(kMaxAlpha)) return kInf;
  // bisection in u = ln(1 + alpha)
  double lo = std::log(1e-12);
  double hi = std::log1p(kMaxAlpha);
  if (z <= z_of_alpha(std::expm1(lo))) return std::expm1(lo);
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::fabs(hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (z_of_alpha(std::expm1(mid)) < z) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::expm1(0.5 * (lo + hi));
}

enum class PhaseColor { Green, Orange, Red, Violet };

inline const char* to_string(PhaseColor c) {
  switch (c) {
    case PhaseColor::Green: return "green";
    case PhaseColor::Orange: return "orange";
    case PhaseColor::Red: return "red";
    case PhaseColor::Violet: return "violet";
  }
  return "violet";
}

/// green: both survive; orange: only the random kernel survives; red: neither;
/// violet: only the two-point kernel survives.
inline PhaseColor phase_color(Regime det, Regime rand) {
  const bool d = det == Regime::MeanSurvival;
  const bool r = rand == Regime::MeanSurvival;
  if (d && r) return PhaseColor::Green;
  if (r) return PhaseColor::Orange;
  if (d) return PhaseColor::Violet;
  return PhaseColor::Red;
}

struct PhaseCell {
  double g_over_r;
  double param;
  double alpha;  // +inf when the random kernel is equal sharing
  double z;
  double m_det;
  std::optional<double> d_det;
  Regime regime_det;
  double m_rand;
  std::optional<double> d_rand;
  Regime regime_rand;
  PhaseColor color;
};

struct PhaseGrid {
  PhaseSpec spec;
  std::vector<PhaseCell> cells;  // row-major: g/r outer, parameter inner

  const PhaseCell& at(std::size_t gi, std::size_t pi) const { return cells[gi * spec.param_axis.steps + pi]; }
};

inline PhaseGrid sweep(const PhaseSpec& spec) {
  spec.validate();
  const std::size_t ng = spec.g_axis.steps;
  const std::size_t np = spec.param_axis.steps;

  struct Column {
    double param, alpha, z;
    PartitionKernel det, rand;
  };
  std::vector<Column> columns;
  for (std::size_t j = 0; j < np; ++j) {
    const double param = spec.param_axis.at(j);
    if (spec.family == PhaseFamily::Beta) {
      const double z = z_of_alpha(param);
      columns.push_back({param, param, z, PartitionKernel::deterministic(z), PartitionKernel::beta(param)});
    } else {
      const double alpha = alpha_of_z(param);
      columns.push_back({param, alpha, param, PartitionKernel::deterministic(param),
                         alpha == kInf ? PartitionKernel::equal() : PartitionKernel::beta(alpha)});
    }
  }

  PhaseGrid grid;
  grid.spec = spec;
  grid.cells.resize(ng * np);
  parallel_for(ng, spec.threads, [&](std::size_t i) {
    const double axis = spec.g_axis.at(i);
    const double g_over_r = spec.log_scaled ? std::exp(axis) : axis;
    const ModelParams p{g_over_r, 0.0, 1.0, spec.q_over_r};
    for (std::size_t j = 0; j < np; ++j) {
      const Column& c = columns[j];
      const RegimeReport det = classify(p, c.det);
      const RegimeReport rnd = classify(p, c.rand);
      grid.cells[i * np + j] = {g_over_r, c.param, c.alpha, c.z, det.m, det.d, det.regime,
                                rnd.m, rnd.d, rnd.regime, phase_color(det.regime, rnd.regime)};
    }
  });
  return grid;
}

/// Critical g/r above which the mean number of cells dies out (r = 1, sigma = 0).
inline double survival_boundary(const PartitionKernel& k, double q_over_r) {
  if (!(q_over_r >= 0.0 && q_over_r < 1.0)) throw PreconditionViolated("q/r must lie in [0, 1)");
  return threshold(ThresholdParam::g, ModelParams{0.0, 0.0, 1.0, q_over_r}, k);
}

struct ScatterPoint {
  double vartheta;
  double boundary;
  std::size_t n_modes;
  std::uint64_t seed;
  std::size_t draw_index;
  std::string kernel;
};

/// Random finite-point kernel: locations uniform on (0, 1/2), weights uniform then normalized.
inline PartitionKernel random_points_kernel(std::size_t n_modes, Rng& rng) {
  if (n_modes < 1) throw PreconditionViolated("n_modes must be >= 1");
  std::vector<double> w(n_modes);
  double total = 0.0;
  for (auto& v : w) {
    v = rng.uniform();
    total += v;
  }
  std::vector<Mode> modes;
  for (std::size_t i = 0; i < n_modes; ++i) modes.push_back({std::log(0.5 * rng.uniform()), 0.5 * w[i] / total});
  return PartitionKernel::from_modes(std::move(modes));
}

inline std::vector<ScatterPoint> multimodal_scatter(std::size_t n_modes, std::size_t draws, double q_over_r, std::uint64_t seed,
                                                    unsigned threads = 1) {
  std::vector<ScatterPoint> out(draws);
  parallel_for(draws, threads, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, i);
    const PartitionKernel k = random_points_kernel(n_modes, rng);
    out[i] = {moments(k).min_share, survival_boundary(k, q_over_r), n_modes, seed, i, to_string(k)};
  });
  return out;
}

}  // namespace cellfate
