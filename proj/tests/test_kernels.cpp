#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cellfate/kernels.hpp"
#include "cellfate/parallel.hpp"
#include "cellfate/quadrature.hpp"
#include "cellfate/rng.hpp"
#include "cellfate/special.hpp"

using namespace cellfate;

namespace {

struct RefRow {
  std::string fn;
  double x, a, b, value;
};

std::vector<RefRow> load_reference() {
  std::ifstream in(std::string(CELLFATE_FIXTURES) + "/special_reference.csv");
  std::vector<RefRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    RefRow r;
    s >> r.fn >> r.x >> r.a >> r.b >> r.value;
    rows.push_back(r);
  }
  return rows;
}

// Beta(alpha+1, alpha+1) density written out independently of the library.
double beta_density(double alpha, double t) {
  const double a = alpha + 1.0;
  return std::exp(alpha * std::log(t * (1.0 - t)) - (2.0 * std::lgamma(a) - std::lgamma(2.0 * a)));
}

// Integral over (0, 1) of f times the Beta density, split at 1/2, with the
// endpoint singularities removed by the substitution t = u^k.
template <class F>
double beta_expect(double alpha, F f) {
  const int k = alpha < 0.0 ? 8 : 1;
  auto half = [&](bool left) {
    return quadrature::integrate(
        [&](double u) {
          const double s = std::pow(u, k) * 0.5;
          const double jac = k * std::pow(u, k - 1) * 0.5;
          const double t = left ? s : 1.0 - s;
          return f(t) * beta_density(alpha, s) * jac;  // symmetric density
        },
        0.0, 1.0, 1e-14, 60);
  };
  return half(true) + half(false);
}

PartitionKernel random_kernel(Rng& rng) {
  switch (static_cast<int>(rng.uniform() * 5.0)) {
    case 0: return PartitionKernel::uniform();
    case 1: return PartitionKernel::equal();
    case 2: return PartitionKernel::deterministic(0.5 * rng.uniform());
    case 3: return PartitionKernel::beta(-0.9 + 10.0 * rng.uniform());
    default: {
      const double w = rng.uniform();
      return PartitionKernel::points({{0.5 * rng.uniform(), 0.5 * w}, {0.5 * rng.uniform(), 0.5 * (1.0 - w)}});
    }
  }
}

}  // namespace

TEST(Special, MatchesHighPrecisionReference) {
  const auto rows = load_reference();
  ASSERT_GT(rows.size(), 30u);
  for (const auto& r : rows) {
    double v = 0.0;
    if (r.fn == "digamma") v = special::digamma(r.x);
    if (r.fn == "trigamma") v = special::trigamma(r.x);
    if (r.fn == "ibeta_reg") v = special::regularized_incomplete_beta(r.x, r.a, r.b);
    if (r.fn == "ibeta") v = special::incomplete_beta(r.x, r.a, r.b);
    EXPECT_NEAR(v, r.value, 1e-12 * std::max(1.0, std::fabs(r.value))) << r.fn << " x=" << r.x << " a=" << r.a << " b=" << r.b;
  }
}

TEST(Special, InverseIncompleteBetaRoundTrip) {
  for (double a : {0.05, 0.5, 1.0, 3.0, 40.0}) {
    for (double u : {1e-9, 0.01, 0.3, 0.5}) {
      const double x = special::inverse_regularized_incomplete_beta(u, a, a);
      EXPECT_NEAR(special::regularized_incomplete_beta(x, a, a), u, 1e-10 * u) << a << ' ' << u;
    }
  }
  // Upper levels only where 1 - x is resolvable next to 1; otherwise the
  // symmetric quantile takes the mirrored lower level.
  for (double a : {0.5, 3.0, 40.0}) {
    for (double u : {0.77, 0.999}) {
      const double x = special::inverse_regularized_incomplete_beta(u, a, a);
      EXPECT_NEAR(special::regularized_incomplete_beta(x, a, a), u, 1e-12) << a << ' ' << u;
    }
  }
  const auto k = PartitionKernel::beta(-0.95);
  EXPECT_NEAR(special::regularized_incomplete_beta(quantile(k, 0.001), 0.05, 0.05), 0.001, 1e-13);
  EXPECT_EQ(quantile(k, 0.999), 1.0 - quantile(k, 0.001));
}

TEST(Special, DomainErrors) {
  EXPECT_THROW(special::digamma(0.0), DomainError);
  EXPECT_THROW(special::digamma(-2.0), DomainError);
  EXPECT_THROW(special::regularized_incomplete_beta(1.5, 1.0, 1.0), DomainError);
}

TEST(Kernels, ClosedFormMoments) {
  const auto u = moments(PartitionKernel::uniform());
  EXPECT_DOUBLE_EQ(u.log_moment, -1.0);
  EXPECT_DOUBLE_EQ(u.log2_moment, 2.0);
  EXPECT_DOUBLE_EQ(u.min_share, 0.25);
  EXPECT_EQ(u.lambda_minus, -1.0);

  const auto e = moments(PartitionKernel::equal());
  EXPECT_DOUBLE_EQ(e.log_moment, -std::log(2.0));
  EXPECT_DOUBLE_EQ(e.min_share, 0.5);
  EXPECT_EQ(e.lambda_minus, -kInf);

  const auto d = moments(PartitionKernel::deterministic(0.2));
  EXPECT_NEAR(d.log_moment, 0.5 * (std::log(0.2) + std::log(0.8)), 1e-15);
  EXPECT_DOUBLE_EQ(d.min_share, 0.2);

  EXPECT_NEAR(mellin(PartitionKernel::uniform(), 2.0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(mellin(PartitionKernel::equal(), 3.0), 0.125, 1e-15);
  EXPECT_EQ(mellin(PartitionKernel::uniform(), -1.0), kInf);
  EXPECT_NEAR(mellin(PartitionKernel::deterministic(0.1), -2.0), 0.5 * (100.0 + 1.0 / 0.81), 1e-12);
}

TEST(Kernels, BetaMomentsAgainstQuadrature) {
  for (double alpha : {-0.5, 0.0, 0.7, 3.0, 12.0}) {
    const auto k = PartitionKernel::beta(alpha);
    const auto mom = moments(k);
    EXPECT_EQ(mom.lambda_minus, -(alpha + 1.0));
    EXPECT_NEAR(mom.log_moment, beta_expect(alpha, [](double t) { return std::log(t); }), 1e-9) << alpha;
    EXPECT_NEAR(mom.log2_moment, beta_expect(alpha, [](double t) { return std::log(t) * std::log(t); }), 1e-8) << alpha;
    EXPECT_NEAR(mom.min_share, beta_expect(alpha, [](double t) { return std::min(t, 1.0 - t); }), 1e-10) << alpha;
    EXPECT_NEAR(mom.min_share, z_of_alpha(alpha), 1e-14);
    for (double lambda : {-0.3 * (alpha + 1.0), 0.5, 2.0}) {
      EXPECT_NEAR(mellin(k, lambda), beta_expect(alpha, [&](double t) { return std::pow(t, lambda); }), 1e-9) << alpha << ' ' << lambda;
      EXPECT_NEAR(mellin_log(k, lambda), beta_expect(alpha, [&](double t) { return std::pow(t, lambda) * std::log(t); }), 1e-8);
    }
  }
  // alpha = 0 is the uniform law.
  EXPECT_NEAR(z_of_alpha(0.0), 0.25, 1e-15);
}

TEST(Kernels, ZAlphaLimits) {
  EXPECT_LT(z_of_alpha(-0.999), 0.01);
  EXPECT_NEAR(z_of_alpha(1e4), 0.5, 0.5 / std::sqrt(1e4));
  double prev = 0.0;
  for (double a = -0.99; a < 30.0; a += 0.37) {
    const double z = z_of_alpha(a);
    EXPECT_GT(z, prev);
    prev = z;
  }
}

TEST(Kernels, MellinDerivativesAreFiniteDifferences) {
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    const auto k = random_kernel(rng);
    const double lm = lambda_minus(k);
    const double lambda = std::isfinite(lm) ? lm * 0.4 : -1.0 + 3.0 * rng.uniform();
    const double h = 1e-5;
    const double fd = (mellin(k, lambda + h) - mellin(k, lambda - h)) / (2.0 * h);
    EXPECT_NEAR(mellin_log(k, lambda), fd, 1e-6 * (1.0 + std::fabs(fd))) << to_string(k);
    const double fd2 = (mellin_log(k, lambda + h) - mellin_log(k, lambda - h)) / (2.0 * h);
    EXPECT_NEAR(mellin_log2(k, lambda), fd2, 1e-5 * (1.0 + std::fabs(fd2))) << to_string(k);
  }
}

TEST(Kernels, SymmetryOfQuantiles) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto k = random_kernel(rng);
    if (!k.is<Uniform>() && !k.is<BetaSym>()) continue;  // atoms: quantile is only left-continuous
    const double u = 0.001 + 0.998 * rng.uniform();
    EXPECT_NEAR(quantile(k, u) + quantile(k, 1.0 - u), 1.0, 1e-10) << to_string(k) << " u=" << u;
  }
}

TEST(Kernels, SamplesMatchMoments) {
  for (const auto& k : {PartitionKernel::uniform(), PartitionKernel::beta(-0.6), PartitionKernel::beta(4.0),
                        PartitionKernel::deterministic(0.1), PartitionKernel::points({{0.05, 0.3}, {0.3, 0.2}})}) {
    Rng rng(17);
    const int n = 200000;
    std::vector<double> logs(n), mins(n), vals(n);
    for (int i = 0; i < n; ++i) {
      const double t = sample(k, rng);
      ASSERT_GT(t, 0.0);
      ASSERT_LT(t, 1.0);
      vals[i] = t;
      logs[i] = std::log(t);
      mins[i] = std::min(t, 1.0 - t);
    }
    const auto mom = moments(k);
    const auto l = mean_se(logs);
    const auto m = mean_se(mins);
    const auto v = mean_se(vals);
    EXPECT_NEAR(l.mean, mom.log_moment, 5.0 * l.std_error) << to_string(k);
    EXPECT_NEAR(m.mean, mom.min_share, 5.0 * m.std_error + 1e-15) << to_string(k);
    EXPECT_NEAR(v.mean, 0.5, 5.0 * v.std_error) << to_string(k);
  }
}

TEST(Kernels, JensenAgainstEqualSharing) {
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const auto k = random_kernel(rng);
    EXPECT_LE(moments(k).log_moment, -std::log(2.0) + 1e-15) << to_string(k);
    EXPECT_LE(moments(k).min_share, 0.5 + 1e-15);
  }
}

TEST(KernelText, RoundTrip) {
  for (const char* text : {"uniform", "equal", "det:z=0.2", "beta:alpha=3.5", "points:z=0.1,p=0.25;z=0.3,p=0.25",
                           "points:logz=-1400,p=0.15;z=0.2857,p=0.35"}) {
    const auto k = parse_kernel(text);
    const auto again = parse_kernel(to_string(k));
    EXPECT_EQ(to_string(again), to_string(k)) << text;
    EXPECT_EQ(moments(again).log_moment, moments(k).log_moment) << text;
  }
  EXPECT_EQ(to_string(parse_kernel("  det : z = 0.25 ")), "det:z=0.25");
}

TEST(KernelText, ErrorsNameTheToken) {
  auto message = [](const char* text) {
    try {
      parse_kernel(text);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("<no error>");
  };
  EXPECT_NE(message("gamma:k=2").find("gamma"), std::string::npos);
  EXPECT_NE(message("beta:alpha=abc").find("abc"), std::string::npos);
  EXPECT_NE(message("beta:a=1").find("'a'"), std::string::npos);
  EXPECT_NE(message("det:z=0.7").find("0.7"), std::string::npos);
  EXPECT_NE(message("points:z=0.1").find("z=0.1"), std::string::npos);
  EXPECT_NE(message("points:z=0.1,p=0.2").find("points"), std::string::npos);
  EXPECT_NE(message("uniform:x=1").find("x=1"), std::string::npos);
}

TEST(Kernels, Preconditions) {
  EXPECT_THROW(PartitionKernel::beta(-1.0), PreconditionViolated);
  EXPECT_THROW(PartitionKernel::deterministic(0.0), PreconditionViolated);
  EXPECT_THROW(PartitionKernel::points({{0.1, 0.2}}), PreconditionViolated);
  EXPECT_THROW(quantile(PartitionKernel::uniform(), 1.0), DomainError);
  EXPECT_THROW(density(PartitionKernel::equal(), 0.3), DomainError);
  EXPECT_NEAR(density(PartitionKernel::beta(2.0), 0.5), beta_density(2.0, 0.5), 1e-13);
}

TEST(Kernels, TinyModesKeepExactMoments) {
  // z = e^-1400 is below the double range; its log moment is still exact.
  const auto k = PartitionKernel::from_modes({{-1400.0, 0.1}, {std::log(0.3), 0.4}});
  const double expect = 0.1 * (-1400.0 + std::log1p(-std::exp(-1400.0))) + 0.4 * (std::log(0.3) + std::log(0.7));
  EXPECT_NEAR(moments(k).log_moment, expect, 1e-12);
  EXPECT_EQ(lambda_minus(k), -kInf);
  EXPECT_TRUE(std::isfinite(mellin(k, -0.1)));
}
