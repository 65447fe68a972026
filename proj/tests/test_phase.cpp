#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cellfate/phase.hpp"

using namespace cellfate;

namespace {

// g/r where the column first stops surviving, bracketed by neighbouring rows
std::pair<double, double> flip_bracket(const PhaseGrid& grid, std::size_t col, bool rand) {
  const std::size_t ng = grid.spec.g_axis.steps;
  for (std::size_t i = 1; i < ng; ++i) {
    const auto& a = grid.at(i - 1, col);
    const auto& b = grid.at(i, col);
    const Regime ra = rand ? a.regime_rand : a.regime_det, rb = rand ? b.regime_rand : b.regime_det;
    if (ra != rb) return {a.g_over_r, b.g_over_r};
  }
  return {kInf, kInf};
}

// atoms at z1 < vartheta < z2 weighted so that E[min(Theta, 1 - Theta)] = vartheta
PartitionKernel two_modes(double z1, double z2, double vartheta) {
  const double w = (z2 - vartheta) / (z2 - z1);
  return PartitionKernel::points({{z1, 0.5 * w}, {z2, 0.5 * (1.0 - w)}});
}

PhaseSpec linear_spec(PhaseFamily family, AxisSpec g, AxisSpec param) {
  PhaseSpec s = PhaseSpec::defaults(family);
  s.log_scaled = false;
  s.g_axis = g;
  s.param_axis = param;
  return s;
}

}  // namespace

TEST(Phase, UniformColumnFlipsAtClosedForm) {
  const auto grid = sweep(linear_spec(PhaseFamily::Beta, {0.0, 12.0, 241}, {0.0, 20.0, 3}));
  const auto [lo, hi] = flip_bracket(grid, 0, true);
  const double expected = 3.0 + 2.0 * std::numbers::sqrt2;
  EXPECT_LE(lo, expected);
  EXPECT_GE(hi, expected);
  EXPECT_EQ(grid.at(0, 0).regime_rand, Regime::MeanSurvival);
}

TEST(Phase, EqualSharingColumnFlipsAtFixedPoint) {
  const auto grid = sweep(linear_spec(PhaseFamily::Deterministic, {0.0, 6.0, 241}, {0.25, 0.5, 2}));
  EXPECT_EQ(grid.at(0, 1).alpha, kInf);
  const double expected = x0(0.0) * std::numbers::ln2;
  for (bool rand : {false, true}) {
    const auto [lo, hi] = flip_bracket(grid, 1, rand);
    EXPECT_LE(lo, expected);
    EXPECT_GE(hi, expected);
  }
}

TEST(Phase, ColumnsFlipOnceAndNeverTurnViolet) {
  for (auto family : {PhaseFamily::Beta, PhaseFamily::Deterministic}) {
    for (double qr : {0.0, 0.4}) {
      PhaseSpec s = PhaseSpec::defaults(family);
      s.g_axis.steps = 60;
      s.param_axis.steps = 40;
      s.q_over_r = qr;
      const auto grid = sweep(s);
      for (const auto& c : grid.cells) EXPECT_NE(c.color, PhaseColor::Violet);
      for (std::size_t j = 0; j < s.param_axis.steps; ++j) {
        for (bool rand : {false, true}) {
          int flips = 0;
          for (std::size_t i = 1; i < s.g_axis.steps; ++i) {
            const auto& a = grid.at(i - 1, j);
            const auto& b = grid.at(i, j);
            flips += (rand ? a.regime_rand != b.regime_rand : a.regime_det != b.regime_det) ? 1 : 0;
          }
          EXPECT_LE(flips, 1);
        }
      }
    }
  }
}

TEST(Phase, BetaMinimumShareIsZAlpha) {
  for (double alpha : {-0.9, -0.5, 0.0, 0.7, 3.0, 20.0}) {
    EXPECT_NEAR(moments(PartitionKernel::beta(alpha)).min_share, z_of_alpha(alpha), 1e-10);
    EXPECT_NEAR(alpha_of_z(z_of_alpha(alpha)), alpha, 1e-6 * (1.0 + std::fabs(alpha)));
  }
  EXPECT_EQ(alpha_of_z(0.5), kInf);
  EXPECT_THROW(alpha_of_z(0.6), PreconditionViolated);
}

TEST(Boundary, EqualSharingIsTheFloor) {
  Rng rng(31);
  for (double qr : {0.0, 0.3, 0.8}) {
    const double floor = x0(qr) * std::numbers::ln2;
    EXPECT_NEAR(survival_boundary(PartitionKernel::equal(), qr), floor, 1e-9);
    for (int i = 0; i < 40; ++i) {
      const auto k = random_points_kernel(1 + static_cast<std::size_t>(3 * rng.uniform()), rng);
      EXPECT_GE(survival_boundary(k, qr), floor - 1e-9) << to_string(k);
    }
  }
}

TEST(Boundary, DeterministicIsWorstForItsMinimumShare) {
  Rng rng(32);
  for (double vartheta : {0.05, 0.2, 0.4}) {
    const double det = survival_boundary(PartitionKernel::deterministic(vartheta), 0.0);
    for (int i = 0; i < 50; ++i) {
      const double z1 = vartheta * rng.uniform();
      const double z2 = vartheta + (0.5 - vartheta) * rng.uniform();
      const auto k = two_modes(z1, z2, vartheta);
      ASSERT_NEAR(moments(k).min_share, vartheta, 1e-12);
      EXPECT_GE(survival_boundary(k, 0.0), det - 1e-9) << to_string(k);
    }
  }
}

TEST(Boundary, GrowsAsTheSmallModeVanishes) {
  double prev = survival_boundary(PartitionKernel::deterministic(0.2), 0.0);
  for (double z1 : {1e-2, 1e-4, 1e-6}) {
    const auto k = two_modes(z1, 0.3, 0.2);
    const double b = survival_boundary(k, 0.0);
    EXPECT_GT(b, prev) << to_string(k);
    prev = b;
  }
}

TEST(Scatter, DeterministicAcrossThreads) {
  const auto a = multimodal_scatter(2, 40, 0.2, 7, 1);
  const auto b = multimodal_scatter(2, 40, 0.2, 7, 2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].vartheta, b[i].vartheta);
    EXPECT_EQ(a[i].boundary, b[i].boundary);
    EXPECT_EQ(a[i].kernel, b[i].kernel);
    EXPECT_EQ(a[i].draw_index, i);
  }
  EXPECT_NE(multimodal_scatter(2, 1, 0.2, 8)[0].kernel, a[0].kernel);
}

TEST(Scatter, SingleModeLiesOnTheDeterministicCurve) {
  for (const auto& p : multimodal_scatter(1, 30, 0.0, 9)) {
    EXPECT_NEAR(p.boundary, survival_boundary(PartitionKernel::deterministic(p.vartheta), 0.0), 1e-9 * p.boundary);
  }
}

TEST(Scatter, MultiModeLiesAboveTheDeterministicCurve) {
  for (const auto& p : multimodal_scatter(3, 60, 0.0, 10)) {
    EXPECT_GE(p.boundary, survival_boundary(PartitionKernel::deterministic(p.vartheta), 0.0) - 1e-9);
  }
}

TEST(Phase, SpecValidation) {
  auto s = PhaseSpec::defaults(PhaseFamily::Deterministic);
  s.param_axis = {0.1, 0.7, 5};
  EXPECT_THROW(sweep(s), PreconditionViolated);
  s = PhaseSpec::defaults(PhaseFamily::Beta);
  s.q_over_r = 1.0;
  EXPECT_THROW(sweep(s), PreconditionViolated);
  EXPECT_EQ(parse_phase_family("det"), PhaseFamily::Deterministic);
  EXPECT_THROW(parse_phase_family("gamma"), ParseError);
}
