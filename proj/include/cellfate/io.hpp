#pragma once

// JSON and CSV serialization. Non-finite doubles become the strings "inf",
// "-inf" and "nan" in JSON; CSV floats use 17 significant digits.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellfate/classify.hpp"
#include "cellfate/conditions.hpp"
#include "cellfate/parallel.hpp"
#include "cellfate/phase.hpp"
#include "cellfate/simulate.hpp"
#include "cellfate/spine.hpp"

namespace cellfate::io {

using nlohmann::ordered_json;

inline ordered_json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline ordered_json number(const std::optional<double>& v) { return v ? number(*v) : ordered_json(nullptr); }

/// Inverse of number(): accepts a JSON number or one of the non-finite strings.
inline double read_number(const ordered_json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ParseError("expected a number or \"inf\"/\"-inf\"/\"nan\", got " + j.dump());
}

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_number(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

inline ordered_json to_json(const RegimeReport& r) {
  return {{"m", number(r.m)},
          {"lambda_minus", number(r.lambda_minus)},
          {"tau_hat", number(r.tau_hat)},
          {"phi_tau_hat", number(r.phi_tau_hat)},
          {"d", number(r.d)},
          {"regime", to_string(r.regime)},
          {"rate_exp", number(r.rate_exp)},
          {"rate_poly", number(r.rate_poly)},
          {"boundary_flag", r.boundary_flag}};
}

inline RegimeReport regime_report_from_json(const ordered_json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (j.at(key).is_null()) return std::nullopt;
    return read_number(j.at(key));
  };
  RegimeReport r;
  r.m = read_number(j.at("m"));
  r.lambda_minus = read_number(j.at("lambda_minus"));
  r.tau_hat = opt("tau_hat");
  r.phi_tau_hat = opt("phi_tau_hat");
  r.d = opt("d");
  r.regime = parse_regime(j.at("regime").get<std::string>());
  r.rate_exp = read_number(j.at("rate_exp"));
  r.rate_poly = read_number(j.at("rate_poly"));
  r.boundary_flag = j.at("boundary_flag").get<bool>();
  return r;
}

inline ordered_json to_json(const MeanSE& s) { return {{"mean", number(s.mean)}, {"std_error", number(s.std_error)}, {"n", s.n}}; }

inline ordered_json to_json(const Estimate& e) {
  return {{"estimate", number(e.estimate)}, {"std_error", number(e.std_error)}, {"reps", e.reps}};
}

inline ordered_json to_json(const ConditionReport& c) {
  ordered_json evals = ordered_json::array();
  for (const auto& e : c.evaluations) evals.push_back({{"x", number(e.x)}, {"lhs", number(e.lhs)}, {"rhs", number(e.rhs)}});
  ordered_json w = nullptr;
  if (c.witness) w = {{"x", number(c.witness->x)}, {"value", number(c.witness->value)}};
  return {{"condition", c.condition}, {"verdict", to_string(c.verdict)}, {"message", c.message}, {"witness", w}, {"evaluations", evals}};
}

inline ordered_json to_json(const MtoReport& m) {
  return {{"lhs", to_json(m.lhs)}, {"rhs", to_json(m.rhs)}, {"z_score", number(m.z_score)}, {"stable_trunc", number(m.stable_trunc)}};
}

// --- phase ------------------------------------------------------------------

inline constexpr const char* kPhaseHeader = "g_over_r,param,m_det,d_det,regime_det,m_rand,d_rand,regime_rand,color";
inline constexpr const char* kScatterHeader = "vartheta,boundary,n_modes,seed,draw_index";

inline void write_phase_csv(std::ostream& out, const PhaseGrid& grid) {
  out << kPhaseHeader << '\n';
  for (const auto& c : grid.cells) {
    out << csv_number(c.g_over_r) << ',' << csv_number(c.param) << ',' << csv_number(c.m_det) << ',' << csv_number(c.d_det) << ','
        << to_string(c.regime_det) << ',' << csv_number(c.m_rand) << ',' << csv_number(c.d_rand) << ',' << to_string(c.regime_rand)
        << ',' << to_string(c.color) << '\n';
  }
}

inline void write_scatter_csv(std::ostream& out, const std::vector<ScatterPoint>& pts) {
  out << kScatterHeader << '\n';
  for (const auto& p : pts) {
    out << csv_number(p.vartheta) << ',' << csv_number(p.boundary) << ',' << p.n_modes << ',' << p.seed << ',' << p.draw_index << '\n';
  }
}

inline ordered_json to_json(const PhaseCell& c) {
  return {{"g_over_r", number(c.g_over_r)}, {"param", number(c.param)},         {"m_det", number(c.m_det)},
          {"d_det", number(c.d_det)},       {"regime_det", to_string(c.regime_det)}, {"m_rand", number(c.m_rand)},
          {"d_rand", number(c.d_rand)},     {"regime_rand", to_string(c.regime_rand)}, {"color", to_string(c.color)}};
}

inline ordered_json to_json(const ScatterPoint& p) {
  return {{"vartheta", number(p.vartheta)}, {"boundary", number(p.boundary)}, {"n_modes", p.n_modes},
          {"seed", p.seed},                 {"draw_index", p.draw_index},       {"kernel", p.kernel}};
}

// --- simulate ---------------------------------------------------------------

inline constexpr const char* kTrajectoryHeader = "rep,t,N,C,frac_growing,frac_const,frac_positive";

/// One row per (replication, record time). N counts every non-dead cell,
/// exploded ones included; C only those with a finite load.
inline void write_trajectory_csv(std::ostream& out, const PopulationTrajectory& tr) {
  out << kTrajectoryHeader << '\n';
  for (std::size_t i = 0; i < tr.reps.size(); ++i) {
    for (const auto& p : tr.reps[i].points) {
      out << i << ',' << csv_number(p.t) << ',' << p.N << ',' << p.C << ',' << csv_number(detail::fraction(p.n_growing, p.N)) << ','
          << csv_number(detail::fraction(p.n_const, p.N)) << ',' << csv_number(detail::fraction(p.n_positive, p.N)) << '\n';
    }
  }
}

inline ordered_json to_json(const TimeSummary& s) {
  return {{"t", number(s.t)},
          {"N", to_json(s.N)},
          {"C", to_json(s.C)},
          {"frac_growing", to_json(s.frac_growing)},
          {"frac_const", to_json(s.frac_const)},
          {"frac_positive", to_json(s.frac_positive)}};
}

inline ordered_json summary_json(const PopulationTrajectory& tr) {
  ordered_json times = ordered_json::array();
  for (const auto& s : summarize(tr)) times.push_back(to_json(s));
  return {{"reps", tr.reps.size()},
          {"aborted_reps", tr.aborted},
          {"explosion_cap", number(tr.explosion_cap)},
          {"stable_trunc", number(tr.stable_trunc)},
          {"stable_log_bias", number(tr.stable_log_bias)},
          {"times", times}};
}

}  // namespace cellfate::io
