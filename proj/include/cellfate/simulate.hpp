#pragma once

// Monte Carlo simulation of the branching cell population.
//
// A replication walks the genealogy depth first: each cell's life is
// independent of its siblings given its birth load, so cells are simulated
// one at a time from birth to division, death or the horizon, and only their
// loads at the record times are kept.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cellfate/errors.hpp"
#include "cellfate/integrator.hpp"
#include "cellfate/model.hpp"
#include "cellfate/parallel.hpp"
#include "cellfate/rng.hpp"

namespace cellfate {

/// Thresholds for the infected-fraction counters kept at every record time.
struct FractionParams {
  double eta = 0.0;          // growing threshold exp((eta - eps_growing) t)
  double eps_growing = 0.0;
  double eps_const = 1e-3;   // constant threshold
};

struct SimConfig {
  double t_max = 1.0;
  double dt = 1e-3;
  std::size_t reps = 1000;
  std::uint64_t seed = 1;
  double x0 = 1.0;
  std::uint64_t max_cells = 1'000'000;  // per replication, counting every cell ever born
  double explosion_cap = 0.0;           // 0: 1e12 * max(x0, 1)
  double stable_trunc = 0.0;            // relative truncation; 0: default_stable_truncation
  std::vector<double> record_times;     // empty: {t_max}
  bool keep_snapshots = false;
  FractionParams fractions;
  unsigned threads = 1;

  double resolved_cap() const { return explosion_cap > 0.0 ? explosion_cap : 1e12 * std::max(x0, 1.0); }

  std::vector<double> resolved_record_times() const {
    std::vector<double> t = record_times.empty() ? std::vector<double>{t_max} : record_times;
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }

  void validate() const {
    if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw PreconditionViolated("t_max must be finite and >= 0");
    if (!(dt > 0.0)) throw PreconditionViolated("dt must be > 0");
    if (reps < 1) throw PreconditionViolated("reps must be >= 1");
    if (!(x0 >= 0.0) || !std::isfinite(x0)) throw PreconditionViolated("x0 must be finite and >= 0");
    if (!(resolved_cap() > x0)) throw PreconditionViolated("explosion cap must exceed x0");
    if (stable_trunc < 0.0 || stable_trunc >= 1.0) throw PreconditionViolated("stable truncation must lie in (0, 1)");
    for (double t : record_times) {
      if (!(t >= 0.0 && t <= t_max)) throw PreconditionViolated("record times must lie in [0, t_max]");
    }
  }
};

/// Death at a constant rate q, or at q_of_x(x) <= q_sup when a function is given.
struct DeathRate {
  double q = 0.0;
  ScalarFn q_of_x;
  double q_sup = 0.0;

  double sup() const { return q_of_x ? q_sup : q; }
};

enum class CellStatus { Alive, Dead, Exploded };

struct CellSnapshot {
  std::uint64_t id;
  std::int64_t parent;  // -1 for the ancestor
  double x;             // +inf when exploded
};

struct RecordPoint {
  double t = 0.0;
  std::uint64_t N = 0;  // cells present, exploded ones included
  std::uint64_t C = 0;  // cells with a finite load
  std::uint64_t n_growing = 0;
  std::uint64_t n_const = 0;
  std::uint64_t n_positive = 0;
  double sum_exp_neg = 0.0;  // sum of exp(-x) over cells present
  std::vector<CellSnapshot> cells;
};

struct Replication {
  std::vector<RecordPoint> points;
  bool aborted = false;  // max_cells hit; counts are partial
  std::uint64_t cells_created = 0;
};

struct PopulationTrajectory {
  std::vector<double> record_times;
  std::vector<Replication> reps;
  double explosion_cap = 0.0;
  double stable_trunc = 0.0;     // 0 when the model has no stable jumps
  double stable_log_bias = 0.0;  // bound on the truncation's shift of E[ln x] over the horizon
  bool snapshots = false;
  FractionParams fractions;
  std::size_t aborted = 0;
};

namespace detail {

struct PendingCell {
  double x;
  double birth;
  std::uint64_t id;
  std::int64_t parent;
};

inline void record_cell(RecordPoint& p, const FractionParams& f, bool keep, const PendingCell& c, double x) {
  ++p.N;
  if (x != kInf) ++p.C;
  if (x > std::exp((f.eta - f.eps_growing) * p.t)) ++p.n_growing;
  if (x > f.eps_const) ++p.n_const;
  if (x > 0.0) ++p.n_positive;
  p.sum_exp_neg += std::exp(-x);
  if (keep) p.cells.push_back({c.id, c.parent, x});
}

// Children of a load x for a fraction theta, with exact conservation: the
// larger share is rounded once and the smaller one is its exact complement.
inline std::pair<double, double> split_load(double x, double theta) {
  if (x == kInf) return {kInf, kInf};
  const bool first_larger = theta >= 0.5;
  const double big = (first_larger ? theta : 1.0 - theta) * x;
  const double small = x - big;
  return first_larger ? std::pair{big, small} : std::pair{small, big};
}

}  // namespace detail

inline Replication simulate_replication(const ModelFunctions& model, double r, const DeathRate& death, const SimConfig& cfg,
                                        const Integrator& integ, const std::vector<double>& times, std::uint64_t rep) {
  Rng rng = Rng::stream(cfg.seed, rep);
  Replication out;
  out.points.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out.points[i].t = times[i];

  const double q_sup = death.sup();
  const double total_rate = r + q_sup;
  std::vector<detail::PendingCell> stack;
  stack.push_back({cfg.x0, 0.0, 0, -1});
  out.cells_created = 1;
  std::uint64_t next_id = 1;

  while (!stack.empty()) {
    detail::PendingCell cell = stack.back();
    stack.pop_back();
    double x = cell.x;
    double t = cell.birth;
    auto rec = std::lower_bound(times.begin(), times.end(), t) - times.begin();
    for (;;) {
      const double event = t + rng.exponential(total_rate);
      const double stop = std::min(event, cfg.t_max);
      while (static_cast<std::size_t>(rec) < times.size() && times[rec] < stop) {
        x = integ.advance(x, times[rec] - t, rng);
        t = times[rec];
        detail::record_cell(out.points[rec], cfg.fractions, cfg.keep_snapshots, cell, x);
        ++rec;
      }
      // A record time equal to t_max still sees the cell when no event happened first.
      if (event >= cfg.t_max) {
        if (static_cast<std::size_t>(rec) < times.size() && times[rec] == cfg.t_max) {
          x = integ.advance(x, cfg.t_max - t, rng);
          detail::record_cell(out.points[rec], cfg.fractions, cfg.keep_snapshots, cell, x);
        }
        break;
      }
      x = integ.advance(x, event - t, rng);
      t = event;
      const double u = rng.uniform() * total_rate;
      if (u < r) {
        const double theta = x == kInf || x == 0.0 ? 0.5 : sample(model.kernel_at(x), rng);
        const auto [a, b] = detail::split_load(x, theta);
        stack.push_back({b, t, next_id + 1, static_cast<std::int64_t>(cell.id)});
        stack.push_back({a, t, next_id, static_cast<std::int64_t>(cell.id)});
        next_id += 2;
        out.cells_created += 2;
        if (out.cells_created > cfg.max_cells) {
          out.aborted = true;
          return out;
        }
        break;
      }
      const bool dies = death.q_of_x ? rng.uniform() * q_sup < death.q_of_x(x) : true;
      if (dies) break;
    }
  }
  return out;
}

/// Independent replications of the population started from one cell with load x0.
/// Replications that hit max_cells are flagged (`aborted`), not dropped.
inline PopulationTrajectory simulate_population(const ModelFunctions& model, double r, const DeathRate& death,
                                                const SimConfig& cfg) {
  cfg.validate();
  model.validate();
  if (!(r > 0.0)) throw PreconditionViolated("division rate r must be > 0");
  if (!(death.q >= 0.0) || (death.q_of_x && !(death.q_sup >= 0.0))) throw PreconditionViolated("death rate must be >= 0");

  PopulationTrajectory out;
  out.record_times = cfg.resolved_record_times();
  out.explosion_cap = cfg.resolved_cap();
  out.snapshots = cfg.keep_snapshots;
  out.fractions = cfg.fractions;
  if (model.stable) {
    out.stable_trunc = cfg.stable_trunc > 0.0 ? cfg.stable_trunc : default_stable_truncation(*model.stable, cfg.t_max, cfg.x0);
    const auto tr = StableTruncation::make(*model.stable, out.stable_trunc);
    out.stable_log_bias = tr.log_bias_rate(std::max(cfg.x0, 1e-300)) * cfg.t_max;
  }
  const Integrator integ(model, cfg.dt, out.explosion_cap, out.stable_trunc);

  out.reps.resize(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t i) {
    out.reps[i] = simulate_replication(model, r, death, cfg, integ, out.record_times, i);
  });
  for (const auto& rep : out.reps) out.aborted += rep.aborted ? 1 : 0;
  return out;
}

struct TimeSummary {
  double t;
  MeanSE N, C, frac_growing, frac_const, frac_positive, sum_exp_neg;
};

namespace detail {

inline double fraction(std::uint64_t count, std::uint64_t n) { return n == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n); }

template <class F>
MeanSE reduce_reps(const PopulationTrajectory& tr, std::size_t point, F&& value) {
  std::vector<double> v(tr.reps.size());
  for (std::size_t i = 0; i < tr.reps.size(); ++i) v[i] = value(tr.reps[i].points[point]);
  return mean_se(v);
}

}  // namespace detail

/// Means and standard errors over replications at each record time.
inline std::vector<TimeSummary> summarize(const PopulationTrajectory& tr) {
  std::vector<TimeSummary> out;
  for (std::size_t i = 0; i < tr.record_times.size(); ++i) {
    TimeSummary s;
    s.t = tr.record_times[i];
    s.N = detail::reduce_reps(tr, i, [](const RecordPoint& p) { return static_cast<double>(p.N); });
    s.C = detail::reduce_reps(tr, i, [](const RecordPoint& p) { return static_cast<double>(p.C); });
    s.frac_growing = detail::reduce_reps(tr, i, [](const RecordPoint& p) { return detail::fraction(p.n_growing, p.N); });
    s.frac_const = detail::reduce_reps(tr, i, [](const RecordPoint& p) { return detail::fraction(p.n_const, p.N); });
    s.frac_positive = detail::reduce_reps(tr, i, [](const RecordPoint& p) { return detail::fraction(p.n_positive, p.N); });
    s.sum_exp_neg = detail::reduce_reps(tr, i, [](const RecordPoint& p) { return p.sum_exp_neg; });
    out.push_back(s);
  }
  return out;
}

enum class FractionMode { AboveGrowing, AboveConst, Positive };

struct FractionQuery {
  FractionMode mode = FractionMode::Positive;
  double eta = 0.0;
  double eps = 0.0;
};

/// Fraction of present cells whose load exceeds the mode's threshold (0 when
/// no cell is present), averaged over replications at each record time.
inline std::vector<MeanSE> infected_fraction(const PopulationTrajectory& tr, const FractionQuery& query) {
  if (!tr.snapshots) throw SnapshotsMissing("infected_fraction needs a trajectory simulated with keep_snapshots");
  std::vector<MeanSE> out;
  for (std::size_t i = 0; i < tr.record_times.size(); ++i) {
    const double t = tr.record_times[i];
    double level = 0.0;
    switch (query.mode) {
      case FractionMode::AboveGrowing: level = std::exp((query.eta - query.eps) * t); break;
      case FractionMode::AboveConst: level = query.eps; break;
      case FractionMode::Positive: level = 0.0; break;
    }
    out.push_back(detail::reduce_reps(tr, i, [&](const RecordPoint& p) {
      std::uint64_t count = 0;
      for (const auto& c : p.cells) count += c.x > level ? 1 : 0;
      return detail::fraction(count, p.N);
    }));
  }
  return out;
}

}  // namespace cellfate
