#pragma once

// Partitioning kernels: the symmetric law on (0,1) of the fraction of
// parasites a daughter cell inherits at division.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "cellfate/errors.hpp"
#include "cellfate/rng.hpp"
#include "cellfate/special.hpp"

namespace cellfate {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Two-point law (delta_z + delta_{1-z}) / 2, z in (0, 1/2].
struct Deterministic {
  double z;
};

/// Symmetric Beta(alpha+1, alpha+1) law, alpha > -1.
struct BetaSym {
  double alpha;
};

struct Uniform {};

/// Point mass at 1/2.
struct Equal {};

/// One mode of a finite-point kernel: mass p at z and mass p at 1-z.
///
/// The location is stored as log(z) so that modes far below the smallest
/// representable double (needed by the survival-kernel construction) keep
/// exact moments.
struct Mode {
  double log_z;
  double p;

  double z() const { return std::exp(log_z); }
  double log_one_minus_z() const { return std::log1p(-z()); }
};

struct FinitePoint {
  std::vector<Mode> modes;
};

struct KernelMoments {
  double lambda_minus;  // -inf when every Mellin moment is finite
  double log_moment;    // E[ln Theta]
  double log2_moment;   // E[ln^2 Theta]
  double min_share;     // E[min(Theta, 1 - Theta)]
};

class PartitionKernel {
 public:
  using Family = std::variant<Deterministic, BetaSym, Uniform, Equal, FinitePoint>;

  static PartitionKernel uniform() { return PartitionKernel(Uniform{}); }
  static PartitionKernel equal() { return PartitionKernel(Equal{}); }

  static PartitionKernel deterministic(double z) {
    if (!(z > 0.0 && z <= 0.5)) throw PreconditionViolated("det kernel: z must lie in (0, 1/2]");
    return PartitionKernel(Deterministic{z});
  }

  static PartitionKernel beta(double alpha) {
    if (!(alpha > -1.0) || !std::isfinite(alpha)) throw PreconditionViolated("beta kernel: alpha must be a finite value > -1");
    return PartitionKernel(BetaSym{alpha});
  }

  /// Modes given as (z, p) pairs with z in (0, 1/2) and sum of 2p equal to 1.
  static PartitionKernel points(const std::vector<std::pair<double, double>>& zp) {
    std::vector<Mode> modes;
    modes.reserve(zp.size());
    for (const auto& [z, p] : zp) {
      if (!(z > 0.0 && z < 0.5)) throw PreconditionViolated("points kernel: every z must lie strictly inside (0, 1/2)");
      modes.push_back({std::log(z), p});
    }
    return from_modes(std::move(modes));
  }

  static PartitionKernel from_modes(std::vector<Mode> modes) {
    if (modes.empty()) throw PreconditionViolated("points kernel: at least one mode is required");
    double total = 0.0;
    for (const auto& m : modes) {
      if (!(m.log_z < -std::numbers::ln2) || std::isnan(m.log_z) || m.log_z == -kInf) {
        throw PreconditionViolated("points kernel: every z must lie strictly inside (0, 1/2)");
      }
      if (!(m.p > 0.0)) throw PreconditionViolated("points kernel: every p must be positive");
      total += 2.0 * m.p;
    }
    if (std::fabs(total - 1.0) > 1e-12) {
      throw PreconditionViolated("points kernel: probabilities must satisfy sum(2 p_i) = 1 (got " + std::to_string(total) + ")");
    }
    for (auto& m : modes) m.p /= total;
    return PartitionKernel(FinitePoint{std::move(modes)});
  }

  const Family& family() const { return family_; }

  template <class T>
  bool is() const {
    return std::holds_alternative<T>(family_);
  }

 private:
  explicit PartitionKernel(Family family) : family_(std::move(family)) {}

  Family family_;
};

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline double lambda_minus(const PartitionKernel& kernel) {
  return std::visit(overloaded{[](const Uniform&) { return -1.0; },
                               [](const BetaSym& b) { return -(b.alpha + 1.0); },
                               [](const auto&) { return -kInf; }},
                    kernel.family());
}

namespace detail {

// E[Theta^lambda ln^k Theta] for k = 0, 1, 2; lambda > lambda_minus assumed.
inline double mellin_power(const PartitionKernel& kernel, double lambda, int k) {
  return std::visit(
      overloaded{
          [&](const Uniform&) {
            const double s = 1.0 + lambda;
            if (k == 0) return 1.0 / s;
            if (k == 1) return -1.0 / (s * s);
            return 2.0 / (s * s * s);
          },
          [&](const Equal&) {
            const double l = -std::numbers::ln2;
            return std::exp(lambda * l) * std::pow(l, k);
          },
          [&](const Deterministic& d) {
            const double l1 = std::log(d.z);
            const double l2 = std::log1p(-d.z);
            return 0.5 * (std::exp(lambda * l1) * std::pow(l1, k) + std::exp(lambda * l2) * std::pow(l2, k));
          },
          [&](const FinitePoint& f) {
            double sum = 0.0;
            for (const auto& m : f.modes) {
              const double l1 = m.log_z;
              const double l2 = m.log_one_minus_z();
              const double t2 = (l2 == 0.0 && k > 0) ? 0.0 : std::exp(lambda * l2) * std::pow(l2, k);
              sum += m.p * (std::exp(lambda * l1) * std::pow(l1, k) + t2);
            }
            return sum;
          },
          [&](const BetaSym& b) {
            const double a = b.alpha + 1.0;
            const double value =
                std::exp(std::lgamma(a + lambda) + std::lgamma(2.0 * a) - std::lgamma(a) - std::lgamma(2.0 * a + lambda));
            if (k == 0) return value;
            const double diff = special::digamma(a + lambda) - special::digamma(2.0 * a + lambda);
            if (k == 1) return value * diff;
            return value * (diff * diff + special::trigamma(a + lambda) - special::trigamma(2.0 * a + lambda));
          }},
      kernel.family());
}

}  // namespace detail

/// E[Theta^lambda]; +inf when lambda <= lambda_minus.
inline double mellin(const PartitionKernel& kernel, double lambda) {
  if (lambda == 0.0) return 1.0;
  if (!(lambda > lambda_minus(kernel))) return kInf;
  return detail::mellin_power(kernel, lambda, 0);
}

/// d/dlambda E[Theta^lambda] = E[Theta^lambda ln Theta]; -inf when lambda <= lambda_minus.
inline double mellin_log(const PartitionKernel& kernel, double lambda) {
  if (!(lambda > lambda_minus(kernel))) return -kInf;
  return detail::mellin_power(kernel, lambda, 1);
}

/// E[Theta^lambda ln^2 Theta]; +inf when lambda <= lambda_minus.
inline double mellin_log2(const PartitionKernel& kernel, double lambda) {
  if (!(lambda > lambda_minus(kernel))) return kInf;
  return detail::mellin_power(kernel, lambda, 2);
}

/// Deterministic-kernel parameter with the same minimal-share expectation as BetaSym(alpha).
///
/// 2 c_alpha B(1/2; alpha+2, alpha+1) with c_alpha B(alpha+2, alpha+1) = 1/2,
/// so this is the regularized I_{1/2}(alpha+2, alpha+1), which stays
/// representable for large alpha where the complete Beta underflows.
inline double z_of_alpha(double alpha) {
  if (!(alpha > -1.0)) throw PreconditionViolated("z_of_alpha: alpha must exceed -1");
  return special::regularized_incomplete_beta(0.5, alpha + 2.0, alpha + 1.0);
}

inline KernelMoments moments(const PartitionKernel& kernel) {
  KernelMoments out{};
  out.lambda_minus = lambda_minus(kernel);
  std::visit(overloaded{[&](const Uniform&) {
                          out.log_moment = -1.0;
                          out.log2_moment = 2.0;
                          out.min_share = 0.25;
                        },
                        [&](const Equal&) {
                          out.log_moment = -std::numbers::ln2;
                          out.log2_moment = std::numbers::ln2 * std::numbers::ln2;
                          out.min_share = 0.5;
                        },
                        [&](const Deterministic& d) {
                          const double l1 = std::log(d.z);
                          const double l2 = std::log1p(-d.z);
                          out.log_moment = 0.5 * (l1 + l2);
                          out.log2_moment = 0.5 * (l1 * l1 + l2 * l2);
                          out.min_share = d.z;
                        },
                        [&](const FinitePoint& f) {
                          out.log_moment = 0.0;
                          out.log2_moment = 0.0;
                          out.min_share = 0.0;
                          for (const auto& m : f.modes) {
                            const double l1 = m.log_z;
                            const double l2 = m.log_one_minus_z();
                            out.log_moment += m.p * (l1 + l2);
                            out.log2_moment += m.p * (l1 * l1 + l2 * l2);
                            out.min_share += 2.0 * m.p * m.z();
                          }
                        },
                        [&](const BetaSym& b) {
                          const double a = b.alpha + 1.0;
                          const double diff = special::digamma(a) - special::digamma(2.0 * a);
                          out.log_moment = diff;
                          out.log2_moment = diff * diff + special::trigamma(a) - special::trigamma(2.0 * a);
                          out.min_share = z_of_alpha(b.alpha);
                        }},
             kernel.family());
  return out;
}

namespace detail {

inline double clamp_open_unit(double theta) {
  if (theta <= 0.0) return std::numeric_limits<double>::denorm_min();
  if (theta >= 1.0) return std::nextafter(1.0, 0.0);
  return theta;
}

}  // namespace detail

/// Draw one fraction Theta ~ kernel.
inline double sample(const PartitionKernel& kernel, Rng& rng) {
  return std::visit(overloaded{[&](const Uniform&) { return rng.uniform(); },
                               [&](const Equal&) { return 0.5; },
                               [&](const Deterministic& d) { return rng.uniform() < 0.5 ? d.z : 1.0 - d.z; },
                               [&](const FinitePoint& f) {
                                 double u = rng.uniform();
                                 const Mode* chosen = &f.modes.back();
                                 for (const auto& m : f.modes) {
                                   if (u < 2.0 * m.p) {
                                     chosen = &m;
                                     break;
                                   }
                                   u -= 2.0 * m.p;
                                 }
                                 const double z = detail::clamp_open_unit(chosen->z());
                                 return rng.uniform() < 0.5 ? z : 1.0 - z;
                               },
                               [&](const BetaSym& b) {
                                 const double a = b.alpha + 1.0;
                                 const double g1 = rng.log_gamma_variate(a);
                                 const double g2 = rng.log_gamma_variate(a);
                                 return detail::clamp_open_unit(1.0 / (1.0 + std::exp(g2 - g1)));
                               }},
                    kernel.family());
}

/// Left-continuous quantile function of the kernel, u in (0, 1).
inline double quantile(const PartitionKernel& kernel, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile: u must lie in (0,1)");
  return std::visit(overloaded{[&](const Uniform&) { return u; },
                               [&](const Equal&) { return 0.5; },
                               [&](const Deterministic& d) { return u <= 0.5 ? d.z : 1.0 - d.z; },
                               [&](const FinitePoint& f) {
                                 // Atoms sorted ascending: z_i ..., then 1 - z_i in reverse.
                                 std::vector<std::pair<double, double>> atoms;
                                 for (const auto& m : f.modes) {
                                   atoms.emplace_back(m.z(), m.p);
                                   atoms.emplace_back(1.0 - m.z(), m.p);
                                 }
                                 std::sort(atoms.begin(), atoms.end());
                                 double cum = 0.0;
                                 for (const auto& [z, p] : atoms) {
                                   cum += p;
                                   if (u <= cum + 1e-15) return z;
                                 }
                                 return atoms.back().first;
                               },
                               [&](const BetaSym& b) {
                                 const double a = b.alpha + 1.0;
                                 if (u <= 0.5) return special::inverse_regularized_incomplete_beta(u, a, a);
                                 return 1.0 - special::inverse_regularized_incomplete_beta(1.0 - u, a, a);
                               }},
                    kernel.family());
}

/// Density on (0, 1) of a continuous kernel; DomainError for atomic ones.
inline double density(const PartitionKernel& kernel, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("density: theta must lie in (0,1)");
  return std::visit(overloaded{[&](const Uniform&) { return 1.0; },
                               [&](const BetaSym& b) {
                                 const double a = b.alpha + 1.0;
                                 return std::exp(b.alpha * (std::log(theta) + std::log1p(-theta)) - special::log_beta(a, a));
                               },
                               [&](const auto&) -> double { throw DomainError("density: kernel has atoms, no density"); }},
                    kernel.family());
}

// ---------------------------------------------------------------------------
// Text format:
//   uniform | equal | det:z=<f> | beta:alpha=<f> | points:z=<f>,p=<f>[;z=<f>,p=<f>]...
// A points mode may give logz=<f> instead of z=<f> for locations below the
// double range.

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view token, std::string_view context) {
  const std::string text(trim(token));
  if (text.empty()) throw ParseError("kernel: empty number in '" + std::string(context) + "'");
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) {
    throw ParseError("kernel: invalid number '" + text + "' in '" + std::string(context) + "'");
  }
  return value;
}

inline std::pair<std::string_view, std::string_view> split_key_value(std::string_view token) {
  const auto eq = token.find('=');
  if (eq == std::string_view::npos) throw ParseError("kernel: expected key=value, got '" + std::string(token) + "'");
  return {trim(token.substr(0, eq)), trim(token.substr(eq + 1))};
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline PartitionKernel parse_kernel(std::string_view text) {
  text = detail::trim(text);
  const auto colon = text.find(':');
  const std::string_view head = detail::trim(text.substr(0, colon));
  const std::string_view body = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);

  auto single = [&](std::string_view expected_key) {
    if (body.empty()) throw ParseError("kernel: '" + std::string(head) + "' needs " + std::string(expected_key) + "=<value>");
    const auto [key, value] = detail::split_key_value(body);
    if (key != expected_key) throw ParseError("kernel: unknown key '" + std::string(key) + "' for '" + std::string(head) + "'");
    return detail::parse_number(value, body);
  };

  try {
    if (head == "uniform" || head == "equal") {
      if (!body.empty() || colon != std::string_view::npos) {
        throw ParseError("kernel: '" + std::string(head) + "' takes no parameters, got '" + std::string(body) + "'");
      }
      return head == "uniform" ? PartitionKernel::uniform() : PartitionKernel::equal();
    }
    if (head == "det") return PartitionKernel::deterministic(single("z"));
    if (head == "beta") return PartitionKernel::beta(single("alpha"));
    if (head == "points") {
      std::vector<Mode> modes;
      std::string_view rest = body;
      while (!rest.empty()) {
        const auto semi = rest.find(';');
        const std::string_view mode_text = rest.substr(0, semi);
        rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
        const auto comma = mode_text.find(',');
        if (comma == std::string_view::npos) throw ParseError("kernel: mode '" + std::string(mode_text) + "' needs z=<f>,p=<f>");
        const auto [k1, v1] = detail::split_key_value(mode_text.substr(0, comma));
        const auto [k2, v2] = detail::split_key_value(mode_text.substr(comma + 1));
        double log_z = 0.0;
        if (k1 == "z") {
          const double z = detail::parse_number(v1, mode_text);
          if (!(z > 0.0 && z < 0.5)) throw ParseError("kernel: mode location '" + std::string(v1) + "' must lie in (0, 1/2)");
          log_z = std::log(z);
        } else if (k1 == "logz") {
          log_z = detail::parse_number(v1, mode_text);
        } else {
          throw ParseError("kernel: unknown key '" + std::string(k1) + "' in mode '" + std::string(mode_text) + "'");
        }
        if (k2 != "p") throw ParseError("kernel: unknown key '" + std::string(k2) + "' in mode '" + std::string(mode_text) + "'");
        modes.push_back({log_z, detail::parse_number(v2, mode_text)});
      }
      if (modes.empty()) throw ParseError("kernel: 'points' needs at least one mode");
      return PartitionKernel::from_modes(std::move(modes));
    }
  } catch (const PreconditionViolated& e) {
    throw ParseError(std::string("kernel '") + std::string(text) + "': " + e.what());
  }
  throw ParseError("kernel: unknown family '" + std::string(head) + "'");
}

inline std::string to_string(const PartitionKernel& kernel) {
  return std::visit(overloaded{[](const Uniform&) { return std::string("uniform"); },
                               [](const Equal&) { return std::string("equal"); },
                               [](const Deterministic& d) { return "det:z=" + detail::format_double(d.z); },
                               [](const BetaSym& b) { return "beta:alpha=" + detail::format_double(b.alpha); },
                               [](const FinitePoint& f) {
                                 std::string out = "points:";
                                 for (std::size_t i = 0; i < f.modes.size(); ++i) {
                                   const auto& m = f.modes[i];
                                   if (i) out += ';';
                                   if (m.log_z > -700.0) {
                                     out += "z=" + detail::format_double(m.z());
                                   } else {
                                     out += "logz=" + detail::format_double(m.log_z);
                                   }
                                   out += ",p=" + detail::format_double(m.p);
                                 }
                                 return out;
                               }},
                    kernel.family());
}

inline std::string family_name(const PartitionKernel& kernel) {
  return std::visit(overloaded{[](const Uniform&) { return "uniform"; }, [](const Equal&) { return "equal"; },
                               [](const Deterministic&) { return "det"; }, [](const BetaSym&) { return "beta"; },
                               [](const FinitePoint&) { return "points"; }},
                    kernel.family());
}

}  // namespace cellfate
