// Command-line front end. Every subcommand writes either JSON
// ({"manifest": ..., "result": ...}) or CSV; with --out the manifest is also
// written next to the output as <out>.manifest.json together with the wall time.
//
// Exit codes: 0 ok, 2 bad arguments, 3 precondition violated, 4 budget or
// search exhausted, 1 anything else.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cellfate/cellfate.hpp"

namespace {

using namespace cellfate;
using io::number;
using io::ordered_json;

struct Output {
  ordered_json resolved = ordered_json::object();  // defaults actually used, for the manifest
  ordered_json result;
  std::function<void(std::ostream&)> csv;  // empty: the subcommand has no CSV form
};

struct Globals {
  std::string output = "json";
  std::uint64_t seed = 1;
  std::string out;
  unsigned threads = 1;
};

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + '"';
}

struct ModelFlags {
  double g = 0.0;
  double sigma = 0.0;
  double r = 1.0;
  double q = 0.0;
  std::string kernel = "uniform";

  void add(CLI::App* app) {
    app->add_option("--g", g, "parasite growth rate g");
    app->add_option("--sigma", sigma, "parasite noise sigma (>= 0)");
    app->add_option("--r", r, "cell division rate r (> 0)");
    app->add_option("--q", q, "cell death rate q (>= 0)");
    app->add_option("--kernel", kernel, "partition kernel: uniform | equal | det:z=<f> | beta:alpha=<f> | points:z=<f>,p=<f>[;...]");
  }

  ModelParams params() const {
    ModelParams p{g, sigma, r, q};
    p.validate();
    return p;
  }
  PartitionKernel parsed_kernel() const { return parse_kernel(kernel); }
};

struct StableFlags {
  bool on = false;
  double b = -0.5;
  double c = -1.0;

  void add(CLI::App* app) {
    app->add_flag("--stable", on, "add the stable jump measure to the parasite dynamics");
    app->add_option("--stable-b", b, "stable index b in (-1, 0)");
    app->add_option("--stable-c", c, "stable constant c (< 0)");
  }

  std::optional<StableJumpParams> get() const {
    if (!on) return std::nullopt;
    StableJumpParams s{b, c};
    s.validate();
    return s;
  }
};

// --- subcommands ------------------------------------------------------------

Output run_classify(const ModelFlags& m) {
  const auto k = m.parsed_kernel();
  const auto rep = classify(m.params(), k);
  Output o;
  o.result = io::to_json(rep);
  o.result["kernel"] = to_string(k);
  o.csv = [rep](std::ostream& out) {
    out << "m,lambda_minus,tau_hat,phi_tau_hat,d,regime,rate_exp,rate_poly,boundary_flag\n"
        << io::csv_number(rep.m) << ',' << io::csv_number(rep.lambda_minus) << ',' << io::csv_number(rep.tau_hat) << ','
        << io::csv_number(rep.phi_tau_hat) << ',' << io::csv_number(rep.d) << ',' << to_string(rep.regime) << ','
        << io::csv_number(rep.rate_exp) << ',' << io::csv_number(rep.rate_poly) << ',' << (rep.boundary_flag ? "true" : "false")
        << '\n';
  };
  return o;
}

Output run_threshold(const ModelFlags& m, const std::string& param) {
  const auto which = parse_threshold_param(param);
  const double v = threshold(which, ModelParams{m.g, m.sigma, m.r, m.q}, m.parsed_kernel());
  Output o;
  o.result = {{"param", param}, {"value", number(v)}};
  o.csv = [param, v](std::ostream& out) { out << "param,value\n" << param << ',' << io::csv_number(v) << '\n'; };
  return o;
}

Output run_x0(double q_over_r) {
  const double x = x0(q_over_r);
  const double res = x0_residual(x, q_over_r);
  Output o;
  o.result = {{"q_over_r", number(q_over_r)}, {"x0", number(x)}, {"residual", number(res)}, {"g_lim_equal_over_r", number(x * std::numbers::ln2)}};
  o.csv = [=](std::ostream& out) {
    out << "q_over_r,x0,residual\n" << io::csv_number(q_over_r) << ',' << io::csv_number(x) << ',' << io::csv_number(res) << '\n';
  };
  return o;
}

Output run_construct(const ModelFlags& m, double vartheta) {
  const auto c = construct_survival_kernel(m.params(), vartheta);
  const std::string text = to_string(c.kernel);
  const double share = moments(c.kernel).min_share;
  Output o;
  o.result = {{"kernel", text}, {"min_share", number(share)}, {"iterations", c.iterations}, {"report", io::to_json(c.report)}};
  o.csv = [=, regime = c.report.regime](std::ostream& out) {
    out << "kernel,min_share,iterations,regime\n"
        << csv_quote(text) << ',' << io::csv_number(share) << ',' << c.iterations << ',' << to_string(regime) << '\n';
  };
  return o;
}

struct PhaseFlags {
  std::string family = "beta";
  double g_lo = 0.0, g_hi = 6.0;
  std::size_t g_steps = 200;
  bool linear_g = false;
  double p_lo = 0.0, p_hi = 0.0;
  std::size_t p_steps = 200;
  double q_over_r = 0.0;
};

Output run_phase(const PhaseFlags& f, const CLI::App* sub, unsigned threads) {
  PhaseSpec spec = PhaseSpec::defaults(parse_phase_family(f.family));
  spec.g_axis = {f.g_lo, f.g_hi, f.g_steps};
  spec.log_scaled = !f.linear_g;
  if (sub->count("--param-lo") > 0) spec.param_axis.lo = f.p_lo;
  if (sub->count("--param-hi") > 0) spec.param_axis.hi = f.p_hi;
  spec.param_axis.steps = f.p_steps;
  spec.q_over_r = f.q_over_r;
  spec.threads = threads;
  auto grid = std::make_shared<PhaseGrid>(sweep(spec));
  Output o;
  o.resolved = {{"family", f.family},
                {"g_axis", {{"lo", spec.g_axis.lo}, {"hi", spec.g_axis.hi}, {"steps", spec.g_axis.steps}, {"log_scaled", spec.log_scaled}}},
                {"param_axis", {{"lo", spec.param_axis.lo}, {"hi", spec.param_axis.hi}, {"steps", spec.param_axis.steps}}},
                {"q_over_r", spec.q_over_r},
                {"sign_tolerance", kSignTolerance}};
  ordered_json cells = ordered_json::array();
  for (const auto& c : grid->cells) cells.push_back(io::to_json(c));
  o.result = {{"cells", std::move(cells)}};
  o.csv = [grid](std::ostream& out) { io::write_phase_csv(out, *grid); };
  return o;
}

Output run_boundary(const std::vector<std::string>& kernels, const std::string& curve, std::size_t steps, double q_over_r) {
  struct Row {
    std::string kernel;
    double vartheta, boundary;
  };
  std::vector<PartitionKernel> ks;
  for (const auto& k : kernels) ks.push_back(parse_kernel(k));
  if (!curve.empty()) {
    if (steps < 2) throw PreconditionViolated("--steps must be >= 2");
    const auto fam = parse_phase_family(curve);
    for (std::size_t i = 0; i < steps; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(steps - 1);
      if (fam == PhaseFamily::Deterministic) {
        ks.push_back(PartitionKernel::deterministic(0.005 + u * (0.5 - 0.005)));
      } else {
        ks.push_back(PartitionKernel::beta(-0.99 + u * (20.0 + 0.99)));
      }
    }
  }
  if (ks.empty()) throw PreconditionViolated("boundary needs --kernel or --curve");
  std::vector<Row> rows;
  for (const auto& k : ks) rows.push_back({to_string(k), moments(k).min_share, survival_boundary(k, q_over_r)});
  Output o;
  o.resolved = {{"q_over_r", q_over_r}};
  o.result = ordered_json::array();
  for (const auto& r : rows) o.result.push_back({{"kernel", r.kernel}, {"vartheta", number(r.vartheta)}, {"boundary", number(r.boundary)}});
  o.csv = [rows](std::ostream& out) {
    out << "kernel,vartheta,boundary\n";
    for (const auto& r : rows) out << csv_quote(r.kernel) << ',' << io::csv_number(r.vartheta) << ',' << io::csv_number(r.boundary) << '\n';
  };
  return o;
}

Output run_scatter(std::size_t n_modes, std::size_t draws, double q_over_r, std::uint64_t seed, unsigned threads) {
  auto pts = std::make_shared<std::vector<ScatterPoint>>(multimodal_scatter(n_modes, draws, q_over_r, seed, threads));
  Output o;
  o.resolved = {{"locations", "uniform on (0, 1/2)"}, {"weights", "uniform, normalized"}};
  o.result = ordered_json::array();
  for (const auto& p : *pts) o.result.push_back(io::to_json(p));
  o.csv = [pts](std::ostream& out) { io::write_scatter_csv(out, *pts); };
  return o;
}

struct GeneralModelFlags {
  std::string drift, diffusion, jump_rate, pi, kernel_alpha;

  void add(CLI::App* app, bool with_kernel_alpha) {
    app->add_option("--drift", drift, "g(x): zero | linear:g=<f> | quadratic:s=<f> | logistic:g=<f>,K=<f> | table:<csv>");
    app->add_option("--diffusion", diffusion, "sigma^2(x), same grammar as --drift");
    app->add_option("--jump-rate", jump_rate, "p(x), same grammar as --drift");
    app->add_option("--pi", pi, "jump law: none | z=<f>,w=<f>[;z=<f>,w=<f>]...[;divergent]");
    if (with_kernel_alpha) app->add_option("--kernel-alpha", kernel_alpha, "alpha(x) of a load-dependent Beta kernel, same grammar as --drift");
  }

  bool any() const { return !drift.empty() || !diffusion.empty() || !jump_rate.empty() || !pi.empty() || !kernel_alpha.empty(); }

  ModelFunctions build(const ModelFlags& m, const std::optional<StableJumpParams>& stable) const {
    if (!any()) return ModelFunctions::make_multiplicative(m.g, m.sigma, m.parsed_kernel(), stable);
    ModelFunctions f;
    f.drift = parse_function(drift.empty() ? "zero" : drift);
    f.diffusion2 = parse_function(diffusion.empty() ? "zero" : diffusion);
    f.jump_rate = parse_function(jump_rate.empty() ? "zero" : jump_rate);
    f.pi = parse_measure(pi.empty() ? "none" : pi);
    f.kernel = m.parsed_kernel();
    if (!kernel_alpha.empty()) {
      auto alpha = parse_function(kernel_alpha);
      f.kernel_of_x = [alpha](double x) { return PartitionKernel::beta(alpha(x)); };
    }
    f.stable = stable;
    f.description = "general";
    return f;
  }
};

const char* scheme_name(Integrator::Scheme s) {
  switch (s) {
    case Integrator::Scheme::ExactGbm: return "exact_gbm";
    case Integrator::Scheme::ExactStableOde: return "exact_stable_ode";
    case Integrator::Scheme::Euler: return "euler";
  }
  return "euler";
}

struct SimFlags {
  double t = 1.0;
  double dt = 1e-3;
  std::size_t reps = 1000;
  double x0 = 1.0;
  std::uint64_t max_cells = 1'000'000;
  double cap = 0.0;
  double stable_trunc = 0.0;
  std::vector<double> record_times;
  double eta = 0.0;
  double eps_growing = 0.0;
  double eps_const = 1e-3;
};

Output run_simulate(const ModelFlags& m, const StableFlags& s, const GeneralModelFlags& gm, const SimFlags& f, std::uint64_t seed,
                    unsigned threads) {
  const auto model = gm.build(m, s.get());
  SimConfig cfg;
  cfg.t_max = f.t;
  cfg.dt = f.dt;
  cfg.reps = f.reps;
  cfg.seed = seed;
  cfg.x0 = f.x0;
  cfg.max_cells = f.max_cells;
  cfg.explosion_cap = f.cap;
  cfg.stable_trunc = f.stable_trunc;
  cfg.record_times = f.record_times;
  cfg.fractions = {f.eta, f.eps_growing, f.eps_const};
  cfg.threads = threads;
  if (!(m.r > 0.0)) throw PreconditionViolated("division rate r must be > 0");
  auto tr = std::make_shared<PopulationTrajectory>(simulate_population(model, m.r, DeathRate{m.q, {}, 0.0}, cfg));
  Output o;
  ordered_json times = ordered_json::array();
  for (double t : tr->record_times) times.push_back(number(t));
  o.resolved = {{"record_times", times},
                {"explosion_cap", number(tr->explosion_cap)},
                {"stable_trunc", number(tr->stable_trunc)},
                {"stable_log_bias", number(tr->stable_log_bias)},
                {"scheme", scheme_name(Integrator(model, cfg.dt, tr->explosion_cap, tr->stable_trunc).scheme())},
                {"N_counts", "non-dead cells including exploded ones"},
                {"C_counts", "cells with finite load"}};
  o.result = io::summary_json(*tr);
  o.csv = [tr](std::ostream& out) { io::write_trajectory_csv(out, *tr); };
  return o;
}

struct SpineFlags {
  std::vector<double> t{1.0};
  double x0 = 1.0;
  std::size_t reps = 10000;
  double dt = 0.0;
  double cap = 0.0;
  double stable_trunc = 0.0;
  std::string quantity = "mean_cells";
};

Output run_spine(const ModelFlags& m, const StableFlags& s, const SpineFlags& f, std::uint64_t seed, unsigned threads) {
  const auto p = m.params();
  const auto k = m.parsed_kernel();
  const auto stable = s.get();
  if (f.quantity != "mean_cells" && f.quantity != "nonexplosion") {
    throw ParseError("unknown --quantity '" + f.quantity + "' (expected mean_cells or nonexplosion)");
  }
  SpineConfig cfg;
  cfg.t_max = f.t.empty() ? 0.0 : *std::max_element(f.t.begin(), f.t.end());
  cfg.dt = f.dt;
  cfg.reps = f.reps;
  cfg.seed = seed;
  cfg.x0 = f.x0;
  cfg.threads = threads;
  auto curve = nonexplosion_curve(p, k, stable, f.t, f.x0, cfg);
  if (f.quantity == "mean_cells") {
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const double growth = std::exp((p.r - p.q) * f.t[i]);
      curve[i].estimate *= growth;
      curve[i].std_error *= growth;
    }
  }
  Output o;
  o.resolved = {{"dt", number(cfg.resolved_dt())}, {"quantity", f.quantity}};
  ordered_json pts = ordered_json::array();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    auto e = io::to_json(curve[i]);
    e["t"] = number(f.t[i]);
    pts.push_back(e);
  }
  o.result = {{"quantity", f.quantity}, {"seed", seed}, {"points", pts}};
  if (curve.size() == 1) {
    o.result["estimate"] = number(curve[0].estimate);
    o.result["std_error"] = number(curve[0].std_error);
    o.result["reps"] = curve[0].reps;
  }
  o.csv = [curve, ts = f.t](std::ostream& out) {
    out << "t,estimate,std_error,reps\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
      out << io::csv_number(ts[i]) << ',' << io::csv_number(curve[i].estimate) << ',' << io::csv_number(curve[i].std_error) << ','
          << curve[i].reps << '\n';
    }
  };
  return o;
}

struct MtoFlags {
  double t = 1.0;
  std::string f = "exp_neg";
  double x0 = 1.0;
  std::size_t reps = 10000;
  double dt = 0.0;
  double cap = 0.0;
  double stable_trunc = 0.0;
  double budget = 1e9;
};

Output run_mto(const ModelFlags& m, const StableFlags& s, const MtoFlags& f, std::uint64_t seed, unsigned threads) {
  SpineConfig cfg;
  cfg.t_max = f.t;
  cfg.dt = f.dt;
  cfg.reps = f.reps;
  cfg.seed = seed;
  cfg.x0 = f.x0;
  cfg.explosion_cap = f.cap;
  cfg.stable_trunc = f.stable_trunc;
  cfg.threads = threads;
  const auto fn = parse_mto_functional(f.f);
  const auto rep = many_to_one_check(m.params(), m.parsed_kernel(), s.get(), fn, f.t, f.x0, cfg, f.budget);
  Output o;
  o.resolved = {{"dt", number(cfg.resolved_dt())}, {"explosion_cap", number(cfg.resolved_cap())}, {"stable_trunc", number(rep.stable_trunc)}};
  o.result = io::to_json(rep);
  o.result["f"] = to_string(fn);
  o.result["t"] = number(f.t);
  o.csv = [rep](std::ostream& out) {
    out << "lhs,lhs_se,rhs,rhs_se,z_score\n"
        << io::csv_number(rep.lhs.estimate) << ',' << io::csv_number(rep.lhs.std_error) << ',' << io::csv_number(rep.rhs.estimate) << ','
        << io::csv_number(rep.rhs.std_error) << ',' << io::csv_number(rep.z_score) << '\n';
  };
  return o;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) / static_cast<double>(n - 1)));
  return v;
}

struct ConditionFlags {
  std::string condition = "all";
  double a = 0.5;
  double eta = 0.1;
  std::string f_margin = "zero";
  std::vector<double> grid;
  std::vector<double> probes;
  double ratio_limit = 0.1;
};

Output run_conditions(const ModelFlags& m, const GeneralModelFlags& gm, const ConditionFlags& f) {
  GeneralModelFlags g = gm;
  if (g.drift.empty()) g.drift = "linear:g=" + detail::format_double(m.g);
  if (g.diffusion.empty()) g.diffusion = "quadratic:s=" + detail::format_double(m.sigma * m.sigma);
  const auto model = g.build(m, std::nullopt);
  std::vector<std::string> which;
  if (f.condition == "all") {
    which = {"LN0", "SNinf", "LB", "drift_i", "drift_ii", "drift_iii"};
  } else {
    which = {f.condition};
  }
  const auto grid_or = [&](std::vector<double> def) { return f.grid.empty() ? def : f.grid; };
  std::vector<double> probes = f.probes;
  if (probes.empty()) {
    for (int i = 1; i <= 19; ++i) probes.push_back(0.05 * i);
  }
  std::vector<ConditionReport> reports;
  for (const auto& c : which) {
    if (c == "LN0") {
      reports.push_back(check_LN0(model, m.r, f.a, f.eta, grid_or(log_grid(1e-12, 1e-2, 11))));
    } else if (c == "SNinf") {
      reports.push_back(check_SNinf(model, m.r, f.a, parse_function(f.f_margin), grid_or(log_grid(1e1, 1e12, 12)), f.ratio_limit));
    } else if (c == "LB") {
      const KernelOfX kx = model.kernel_of_x ? model.kernel_of_x : KernelOfX([k = model.kernel](double) { return k; });
      reports.push_back(check_LB(kx, grid_or(log_grid(1e-3, 1e3, 13)), probes));
    } else if (c == "drift_i" || c == "drift_ii" || c == "drift_iii") {
      reports.push_back(drift_criterion(model, m.r, parse_drift_mode(c.substr(6)), grid_or(log_grid(1e-3, 1e3, 13))));
    } else {
      throw ParseError("unknown --condition '" + c + "' (expected LN0, SNinf, LB, drift_i, drift_ii, drift_iii or all)");
    }
  }
  Output o;
  o.resolved = {{"probes", probes}};
  o.result = ordered_json::array();
  for (const auto& r : reports) o.result.push_back(io::to_json(r));
  o.csv = [reports](std::ostream& out) {
    out << "condition,verdict,x,lhs,rhs\n";
    for (const auto& r : reports) {
      for (const auto& e : r.evaluations) {
        out << r.condition << ',' << to_string(r.verdict) << ',' << io::csv_number(e.x) << ',' << io::csv_number(e.lhs) << ','
            << io::csv_number(e.rhs) << '\n';
      }
    }
  };
  return o;
}

Output run_kernel_info(const std::string& text, std::size_t density_points, const std::vector<double>& lambdas) {
  const auto k = parse_kernel(text);
  const auto mom = moments(k);
  Output o;
  o.result = {{"kernel", to_string(k)},
              {"family", family_name(k)},
              {"lambda_minus", number(mom.lambda_minus)},
              {"log_moment", number(mom.log_moment)},
              {"log2_moment", number(mom.log2_moment)},
              {"min_share", number(mom.min_share)}};
  if (k.is<BetaSym>()) o.result["z_alpha"] = number(z_of_alpha(std::get<BetaSym>(k.family()).alpha));
  ordered_json mel = ordered_json::array();
  for (double l : lambdas) mel.push_back({{"lambda", number(l)}, {"value", number(mellin(k, l))}});
  o.result["mellin"] = mel;

  // (theta, value) rows: density for continuous kernels, masses for atomic ones.
  std::vector<std::pair<double, double>> rows;
  const bool continuous = k.is<Uniform>() || k.is<BetaSym>();
  if (continuous) {
    for (std::size_t i = 1; i <= density_points; ++i) {
      const double th = static_cast<double>(i) / static_cast<double>(density_points + 1);
      rows.emplace_back(th, density(k, th));
    }
  } else if (k.is<Equal>()) {
    rows.emplace_back(0.5, 1.0);
  } else if (k.is<Deterministic>()) {
    const double z = std::get<Deterministic>(k.family()).z;
    rows.emplace_back(z, 0.5);
    rows.emplace_back(1.0 - z, 0.5);
  } else {
    for (const auto& md : std::get<FinitePoint>(k.family()).modes) {
      rows.emplace_back(md.z(), md.p);
      rows.emplace_back(1.0 - md.z(), md.p);
    }
    std::sort(rows.begin(), rows.end());
  }
  ordered_json arr = ordered_json::array();
  for (const auto& [th, v] : rows) arr.push_back({number(th), number(v)});
  o.result[continuous ? "density" : "atoms"] = arr;
  o.csv = [rows, continuous](std::ostream& out) {
    out << (continuous ? "theta,density\n" : "theta,mass\n");
    for (const auto& [th, v] : rows) out << io::csv_number(th) << ',' << io::csv_number(v) << '\n';
  };
  return o;
}

// --- plumbing ---------------------------------------------------------------

ordered_json echo_options(const CLI::App* app) {
  ordered_json j = ordered_json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "h") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (res.size() == 1) {
        j[name] = res.front();
      } else {
        j[name] = res;
      }
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"Fate of parasite-infected branching cell populations: classification, sweeps and Monte Carlo checks."};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();

  Globals gl;
  app.add_option("--output", gl.output, "output format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--seed", gl.seed, "base seed of every random stream");
  app.add_option("--out", gl.out, "output file (default stdout); a <out>.manifest.json sidecar is written next to it");
  app.add_option("--threads", gl.threads, "worker threads (0: hardware concurrency); results do not depend on it");

  std::function<Output()> job;

  ModelFlags model;
  StableFlags stable;
  GeneralModelFlags general;

  auto* classify_cmd = app.add_subcommand("classify", "growth indicator, survival index and regime");
  model.add(classify_cmd);
  classify_cmd->callback([&] { job = [&] { return run_classify(model); }; });

  std::string threshold_param;
  auto* threshold_cmd = app.add_subcommand("threshold", "critical value of one parameter, others fixed");
  model.add(threshold_cmd);
  threshold_cmd->add_option("--param", threshold_param, "q | r | g | sigma")->required();
  threshold_cmd->callback([&] { job = [&] { return run_threshold(model, threshold_param); }; });

  double q_over_r = 0.0;
  auto* x0_cmd = app.add_subcommand("x0", "root of x (1 + ln 2 - ln x) = 1 + q/r");
  x0_cmd->add_option("--q-over-r", q_over_r, "q/r in [0, 1)");
  x0_cmd->callback([&] { job = [&] { return run_x0(q_over_r); }; });

  double vartheta = 0.25;
  auto* construct_cmd = app.add_subcommand("construct-kernel", "symmetric kernel with a given minimal share that makes the mean survive");
  model.add(construct_cmd);
  construct_cmd->add_option("--vartheta", vartheta, "minimal-share expectation in (0, 1/2)");
  construct_cmd->callback([&] { job = [&] { return run_construct(model, vartheta); }; });

  PhaseFlags phase;
  auto* phase_cmd = app.add_subcommand("phase", "paired regime map over (g/r, kernel parameter)");
  phase_cmd->add_option("--family", phase.family, "beta (parameter alpha) | deterministic (parameter z)");
  phase_cmd->add_option("--g-lo", phase.g_lo, "lower end of the g/r axis (ln(g/r) unless --linear-g)");
  phase_cmd->add_option("--g-hi", phase.g_hi, "upper end of the g/r axis");
  phase_cmd->add_option("--g-steps", phase.g_steps, "points on the g/r axis");
  phase_cmd->add_flag("--linear-g", phase.linear_g, "g/r axis values are g/r itself");
  phase_cmd->add_option("--param-lo", phase.p_lo, "lower end of the parameter axis (default -0.99 for alpha, z_alpha(-0.99) for z)");
  phase_cmd->add_option("--param-hi", phase.p_hi, "upper end of the parameter axis (default 20 for alpha, z_alpha(20) for z)");
  phase_cmd->add_option("--param-steps", phase.p_steps, "points on the parameter axis");
  phase_cmd->add_option("--q-over-r", phase.q_over_r, "q/r in [0, 1)");
  phase_cmd->callback([&] { job = [&] { return run_phase(phase, phase_cmd, gl.threads); }; });

  std::vector<std::string> boundary_kernels;
  std::string boundary_curve;
  std::size_t boundary_steps = 100;
  double boundary_q = 0.0;
  auto* boundary_cmd = app.add_subcommand("boundary", "critical g/r of kernels (r = 1, sigma = 0)");
  boundary_cmd->add_option("--kernel", boundary_kernels, "kernel (repeatable)");
  boundary_cmd->add_option("--curve", boundary_curve, "also sweep a family: deterministic (z in [0.005, 0.5]) | beta (alpha in [-0.99, 20])");
  boundary_cmd->add_option("--steps", boundary_steps, "points on the --curve sweep");
  boundary_cmd->add_option("--q-over-r", boundary_q, "q/r in [0, 1)");
  boundary_cmd->callback([&] { job = [&] { return run_boundary(boundary_kernels, boundary_curve, boundary_steps, boundary_q); }; });

  std::size_t n_modes = 2, draws = 500;
  double scatter_q = 0.0;
  auto* scatter_cmd = app.add_subcommand("scatter", "critical g/r of random finite-point kernels");
  scatter_cmd->add_option("--n-modes", n_modes, "modes below 1/2 per kernel");
  scatter_cmd->add_option("--draws", draws, "number of random kernels");
  scatter_cmd->add_option("--q-over-r", scatter_q, "q/r in [0, 1)");
  scatter_cmd->callback([&] { job = [&] { return run_scatter(n_modes, draws, scatter_q, gl.seed, gl.threads); }; });

  SimFlags sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo of the branching cell population");
  model.add(simulate_cmd);
  stable.add(simulate_cmd);
  general.add(simulate_cmd, true);
  simulate_cmd->add_option("--t", sim.t, "horizon");
  simulate_cmd->add_option("--dt", sim.dt, "time step of the grid-based integrator");
  simulate_cmd->add_option("--reps", sim.reps, "replications");
  simulate_cmd->add_option("--x0", sim.x0, "initial parasite load");
  simulate_cmd->add_option("--max-cells", sim.max_cells, "per-replication cell budget; replications beyond it are flagged as aborted");
  simulate_cmd->add_option("--cap", sim.cap, "explosion cap (0: 1e12 max(x0, 1))");
  simulate_cmd->add_option("--stable-trunc", sim.stable_trunc, "relative small-jump truncation (0: automatic)");
  simulate_cmd->add_option("--record-times", sim.record_times, "record times (default: the horizon)")->delimiter(',');
  simulate_cmd->add_option("--eta", sim.eta, "growing threshold exp((eta - eps) t): eta");
  simulate_cmd->add_option("--eps-growing", sim.eps_growing, "growing threshold: eps");
  simulate_cmd->add_option("--eps-const", sim.eps_const, "constant threshold");
  simulate_cmd->callback([&] { job = [&] { return run_simulate(model, stable, general, sim, gl.seed, gl.threads); }; });

  SpineFlags spine;
  auto* spine_cmd = app.add_subcommand("spine", "non-explosion probability and mean cell count from the spinal process");
  model.add(spine_cmd);
  stable.add(spine_cmd);
  spine_cmd->add_option("--t", spine.t, "time(s)")->delimiter(',');
  spine_cmd->add_option("--x0", spine.x0, "initial parasite load");
  spine_cmd->add_option("--reps", spine.reps, "replications");
  spine_cmd->add_option("--dt", spine.dt, "integration grid step (0: 1e-3 t)");
  spine_cmd->add_option("--quantity", spine.quantity, "mean_cells | nonexplosion");
  spine_cmd->callback([&] { job = [&] { return run_spine(model, stable, spine, gl.seed, gl.threads); }; });

  MtoFlags mto;
  auto* mto_cmd = app.add_subcommand("verify-mto", "both sides of the many-to-one identity");
  model.add(mto_cmd);
  stable.add(mto_cmd);
  mto_cmd->add_option("--t", mto.t, "time");
  mto_cmd->add_option("--f", mto.f, "constant_one | exp_neg | indicator_finite");
  mto_cmd->add_option("--x0", mto.x0, "initial parasite load");
  mto_cmd->add_option("--reps", mto.reps, "replications on each side");
  mto_cmd->add_option("--dt", mto.dt, "time step (0: 1e-3 t)");
  mto_cmd->add_option("--cap", mto.cap, "explosion cap (0: 1e12 max(x0, 1))");
  mto_cmd->add_option("--stable-trunc", mto.stable_trunc, "relative small-jump truncation (0: automatic)");
  mto_cmd->add_option("--budget", mto.budget, "upper bound on e^(r t) * reps");
  mto_cmd->callback([&] { job = [&] { return run_mto(model, stable, mto, gl.seed, gl.threads); }; });

  ConditionFlags cond;
  auto* cond_cmd = app.add_subcommand("check-conditions", "grid checks of the small/large-load conditions and drift criteria");
  model.add(cond_cmd);
  general.add(cond_cmd, true);
  cond_cmd->add_option("--condition", cond.condition, "LN0 | SNinf | LB | drift_i | drift_ii | drift_iii | all");
  cond_cmd->add_option("--a", cond.a, "exponent a in (0, 1)");
  cond_cmd->add_option("--eta", cond.eta, "eta > 0 of the small-load condition");
  cond_cmd->add_option("--f-margin", cond.f_margin, "margin function f(x) of the large-load condition");
  cond_cmd->add_option("--grid", cond.grid, "x grid (default depends on the condition)")->delimiter(',');
  cond_cmd->add_option("--probes", cond.probes, "quantile levels for LB (default 0.05..0.95)")->delimiter(',');
  cond_cmd->add_option("--ratio-limit", cond.ratio_limit, "largest |remainder| / ln x accepted at the last grid point");
  cond_cmd->callback([&] { job = [&] { return run_conditions(model, general, cond); }; });

  std::string info_kernel = "uniform";
  std::size_t density_points = 0;
  std::vector<double> lambdas;
  auto* info_cmd = app.add_subcommand("kernel-info", "moments, Mellin transform and density of a kernel");
  info_cmd->add_option("--kernel", info_kernel, "kernel");
  info_cmd->add_option("--density-points", density_points, "interior theta points for the density table");
  info_cmd->add_option("--lambda", lambdas, "lambdas at which to evaluate E[Theta^lambda]")->delimiter(',');
  info_cmd->callback([&] { job = [&] { return run_kernel_info(info_kernel, density_points, lambdas); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const auto start = std::chrono::steady_clock::now();
  Output out = job();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  ordered_json manifest = {{"subcommand", sub->get_name()},
                           {"version", kVersion},
                           {"seed", gl.seed},
                           {"config", {{"global", echo_options(&app)}, {"subcommand", echo_options(sub)}}},
                           {"resolved", out.resolved}};

  std::ostringstream body;
  if (gl.output == "csv") {
    if (!out.csv) throw PreconditionViolated("subcommand '" + sub->get_name() + "' has no CSV output");
    out.csv(body);
  } else {
    body << ordered_json{{"manifest", manifest}, {"result", out.result}}.dump(2) << '\n';
  }

  if (gl.out.empty()) {
    std::cout << body.str();
    std::cout.flush();
  } else {
    std::ofstream f(gl.out, std::ios::binary);
    if (!f) throw PreconditionViolated("cannot open --out '" + gl.out + "' for writing");
    f << body.str();
    ordered_json side = manifest;
    side["wall_time_s"] = wall;
    std::ofstream m(gl.out + ".manifest.json", std::ios::binary);
    m << side.dump(2) << '\n';
  }
  std::cerr << "cellfate " << sub->get_name() << ": " << wall << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionViolated& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return 3;
  } catch (const SnapshotsMissing& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return 3;
  } catch (const SearchExhausted& e) {
    std::cerr << "search exhausted: " << e.what() << '\n';
    return 4;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
