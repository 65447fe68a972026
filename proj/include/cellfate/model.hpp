#pragma once

// Per-cell parasite dynamics: drift g(x), diffusion sigma^2(x), jump rate
// p(x) with a finite discrete jump law pi, optional stable jumps, and the
// partitioning kernel (possibly depending on the load at division).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// pchip.hpp in Boost 1.74 calls isnan unqualified and relies on this header.
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include "cellfate/classify.hpp"
#include "cellfate/errors.hpp"
#include "cellfate/kernels.hpp"

namespace cellfate {

struct Atom {
  double z;
  double w;
};

/// Finite discrete measure sum_k w_k delta_{z_k} on (0, inf).
struct DiscreteMeasure {
  std::vector<Atom> atoms;
  // Stands in for a measure whose first moment is infinite (only the drift
  // criteria look at it; such a measure is never simulated).
  bool divergent_first_moment = false;

  bool empty() const { return atoms.empty(); }

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.w;
    return s;
  }

  double first_moment() const {
    if (divergent_first_moment) return kInf;
    double s = 0.0;
    for (const auto& a : atoms) s += a.w * a.z;
    return s;
  }

  void validate() const {
    for (const auto& a : atoms) {
      if (!(a.z > 0.0) || !std::isfinite(a.z)) throw PreconditionViolated("pi atoms must sit at finite z > 0");
      if (!(a.w >= 0.0) || !std::isfinite(a.w)) throw PreconditionViolated("pi weights must be finite and >= 0");
    }
  }
};

using ScalarFn = std::function<double(double)>;
using KernelOfX = std::function<PartitionKernel(double)>;

struct ModelFunctions {
  ScalarFn drift;       // g(x)
  ScalarFn diffusion2;  // sigma^2(x); the noise term is sqrt(2 sigma^2(x)) dB
  ScalarFn jump_rate;   // p(x)
  DiscreteMeasure pi;
  PartitionKernel kernel = PartitionKernel::uniform();
  KernelOfX kernel_of_x;  // empty: `kernel` at every load
  std::optional<StableJumpParams> stable;

  // Set when drift = g x, diffusion2 = sigma^2 x^2 and there are no pi jumps;
  // enables exact log-normal updates.
  bool multiplicative = false;
  double g_lin = 0.0;
  double sigma_lin = 0.0;

  std::string description;

  static ModelFunctions make_multiplicative(double g, double sigma, PartitionKernel kernel,
                                            std::optional<StableJumpParams> stable = std::nullopt) {
    if (!std::isfinite(g)) throw PreconditionViolated("g must be finite");
    if (!(sigma >= 0.0)) throw PreconditionViolated("sigma must be >= 0");
    if (stable) stable->validate();
    ModelFunctions m;
    m.drift = [g](double x) { return g * x; };
    m.diffusion2 = [s2 = sigma * sigma](double x) { return s2 * x * x; };
    m.jump_rate = [](double) { return 0.0; };
    m.kernel = std::move(kernel);
    m.stable = stable;
    m.multiplicative = true;
    m.g_lin = g;
    m.sigma_lin = sigma;
    m.description = "multiplicative";
    return m;
  }

  PartitionKernel kernel_at(double x) const { return kernel_of_x ? kernel_of_x(x) : kernel; }

  /// Checks g(0) = sigma^2(0) = p(0) = 0 and the jump law.
  void validate() const {
    if (!drift || !diffusion2 || !jump_rate) throw PreconditionViolated("model functions must all be set");
    if (drift(0.0) != 0.0 || diffusion2(0.0) != 0.0 || jump_rate(0.0) != 0.0) {
      throw PreconditionViolated("model functions must vanish at x = 0 so that 0 is absorbing");
    }
    pi.validate();
    if (pi.divergent_first_moment) throw PreconditionViolated("pi with infinite first moment cannot be simulated");
    if (stable) stable->validate();
  }
};

// ---------------------------------------------------------------------------
// Named scalar functions:
//   zero | linear:g=<f> | quadratic:s=<f> | logistic:g=<f>,K=<f> | table:<csv path>
// linear is g x, quadratic is s x^2, logistic is g x (1 - x/K).
// Tables hold "x,value" rows and are interpolated with monotone cubics.

/// Monotone piecewise-cubic interpolant of (x, y) samples, linear beyond the ends.
class TabulatedFunction {
 public:
  TabulatedFunction(std::vector<double> x, std::vector<double> y) {
    if (x.size() != y.size() || x.size() < 2) throw PreconditionViolated("table needs at least two (x, value) rows");
    for (std::size_t i = 1; i < x.size(); ++i) {
      if (!(x[i] > x[i - 1])) throw PreconditionViolated("table x values must be strictly increasing");
    }
    x_lo_ = x.front();
    x_hi_ = x.back();
    if (x.size() == 2) {
      // pchip needs four points; a straight line is its own monotone interpolant.
      const double a = x[0], b = x[1], ya = y[0], yb = y[1];
      const double h = (b - a) / 3.0;
      x = {a, a + h, a + 2.0 * h, b};
      y = {ya, ya + (yb - ya) / 3.0, ya + 2.0 * (yb - ya) / 3.0, yb};
    } else if (x.size() == 3) {
      x.insert(x.begin() + 1, 0.5 * (x[0] + x[1]));
      y.insert(y.begin() + 1, 0.5 * (y[0] + y[1]));
    }
    interp_ = std::make_shared<Interp>(std::move(x), std::move(y));
    y_lo_ = (*interp_)(x_lo_);
    y_hi_ = (*interp_)(x_hi_);
    d_lo_ = interp_->prime(x_lo_);
    d_hi_ = interp_->prime(x_hi_);
  }

  double operator()(double x) const {
    if (x <= x_lo_) return y_lo_ + d_lo_ * (x - x_lo_);
    if (x >= x_hi_) return y_hi_ + d_hi_ * (x - x_hi_);
    return (*interp_)(x);
  }

 private:
  using Interp = boost::math::interpolators::pchip<std::vector<double>>;
  std::shared_ptr<Interp> interp_;
  double x_lo_, x_hi_, y_lo_, y_hi_, d_lo_, d_hi_;
};

inline TabulatedFunction load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open table '" + path + "'");
  std::vector<double> xs, ys;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double x = 0.0, y = 0.0;
    if (!(row >> x >> y)) {
      if (xs.empty() && lineno == 1) continue;  // header
      throw ParseError("table '" + path + "': bad row " + std::to_string(lineno));
    }
    xs.push_back(x);
    ys.push_back(y);
  }
  return TabulatedFunction(std::move(xs), std::move(ys));
}

inline ScalarFn parse_function(std::string_view text) {
  text = detail::trim(text);
  const auto colon = text.find(':');
  const std::string head(detail::trim(text.substr(0, colon)));
  const std::string_view body = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);

  auto params = [&](std::initializer_list<std::string_view> keys) {
    std::vector<double> values(keys.size(), std::numeric_limits<double>::quiet_NaN());
    std::string_view rest = body;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view tok = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      const auto [key, value] = detail::split_key_value(tok);
      std::size_t i = 0;
      for (auto k : keys) {
        if (k == key) break;
        ++i;
      }
      if (i == keys.size()) throw ParseError("function '" + head + "': unknown key '" + std::string(key) + "'");
      values[i] = detail::parse_number(value, tok);
    }
    std::size_t i = 0;
    for (auto k : keys) {
      if (std::isnan(values[i++])) throw ParseError("function '" + head + "': missing " + std::string(k) + "=<value>");
    }
    return values;
  };

  if (head == "zero") return [](double) { return 0.0; };
  if (head == "linear") {
    const double g = params({"g"})[0];
    return [g](double x) { return g * x; };
  }
  if (head == "quadratic") {
    const double s = params({"s"})[0];
    return [s](double x) { return s * x * x; };
  }
  if (head == "logistic") {
    const auto v = params({"g", "K"});
    if (!(v[1] > 0.0)) throw ParseError("function 'logistic': K must be positive");
    return [g = v[0], K = v[1]](double x) { return g * x * (1.0 - x / K); };
  }
  if (head == "table") {
    if (body.empty()) throw ParseError("function 'table' needs a file path");
    return load_table(std::string(detail::trim(body)));
  }
  throw ParseError("unknown function '" + head + "'");
}

/// Jump law text: "none" or "z=<f>,w=<f>[;z=<f>,w=<f>]...", optionally with a
/// trailing ";divergent" marker.
inline DiscreteMeasure parse_measure(std::string_view text) {
  text = detail::trim(text);
  DiscreteMeasure out;
  if (text.empty() || text == "none") return out;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto semi = rest.find(';');
    const std::string_view tok = detail::trim(rest.substr(0, semi));
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    if (tok == "divergent") {
      out.divergent_first_moment = true;
      continue;
    }
    const auto comma = tok.find(',');
    if (comma == std::string_view::npos) throw ParseError("jump atom '" + std::string(tok) + "' needs z=<f>,w=<f>");
    const auto [k1, v1] = detail::split_key_value(tok.substr(0, comma));
    const auto [k2, v2] = detail::split_key_value(tok.substr(comma + 1));
    if (k1 != "z") throw ParseError("jump atom: unknown key '" + std::string(k1) + "'");
    if (k2 != "w") throw ParseError("jump atom: unknown key '" + std::string(k2) + "'");
    out.atoms.push_back({detail::parse_number(v1, tok), detail::parse_number(v2, tok)});
  }
  out.validate();
  return out;
}

}  // namespace cellfate
