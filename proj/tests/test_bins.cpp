#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ldm/bins.hpp"

using namespace ldm;

TEST(BinSpec, ValuesAreEquallySpacedWithExactEndpoints) {
  const BinSpec s(-1.0, 1.0, 7);
  const auto v = s.values();
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(v.front(), -1.0);
  EXPECT_EQ(v.back(), 1.0);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_NEAR(v[i] - v[i - 1], s.spacing(), 1e-15);
}

TEST(BinSpec, RejectsDegenerateSpecs) {
  EXPECT_THROW(BinSpec(0.0, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(BinSpec(1.0, 1.0, 3), std::invalid_argument);
}

TEST(BinValue, NearestBin) { EXPECT_EQ(bin_value(0.3, BinSpec::sigmoid(3)), 0.5); }

TEST(BinValue, MidpointTieGoesLow) { EXPECT_EQ(bin_value(0.25, BinSpec::sigmoid(3)), 0.0); }

TEST(BinValue, ClampsOutsideRange) {
  EXPECT_EQ(bin_value(-3.0, BinSpec::sigmoid(4)), 0.0);
  EXPECT_EQ(bin_value(7.0, BinSpec::sigmoid(4)), 1.0);
}

TEST(BinValue, OnBinIsUnchanged) {
  const auto s = BinSpec::sigmoid(5);
  for (double b : s.values()) EXPECT_EQ(bin_value(b, s), b);
}

TEST(BinValueProperty, IdempotentAndWithinHalfSpacing) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  for (int n = 2; n <= 9; ++n) {
    const auto s = BinSpec::sigmoid(n);
    for (int i = 0; i < 20000; ++i) {
      const double a = u(rng);
      const double b = bin_value(a, s);
      ASSERT_EQ(bin_value(b, s), b);
      const double clamped = std::clamp(a, 0.0, 1.0);
      ASSERT_LE(std::fabs(clamped - b), s.spacing() / 2 + 1e-15);
    }
  }
}

TEST(DigitalLoss, OnBinIsZero) {
  const auto s = BinSpec::sigmoid(3);
  const std::vector<double> a = {0.0, 0.5, 1.0, 0.5};
  EXPECT_EQ(digital_loss(a, s), 0.0);
}

TEST(DigitalLoss, SingleActivation) {
  const std::vector<double> a = {0.25};
  EXPECT_DOUBLE_EQ(digital_loss(a, BinSpec::sigmoid(3)), 0.25);
}

TEST(DigitalLoss, MeanOverActivations) {
  const std::vector<double> a = {0.1, 0.4};
  EXPECT_DOUBLE_EQ(digital_loss(a, BinSpec::sigmoid(2)), 0.25);
}

TEST(DigitalLoss, RecordedMatchesPlainAndDifferentiates) {
  const auto s = BinSpec::sigmoid(5);
  diff::Parameter p("a", 3, 1);
  p.value = {0.1, 0.3, 0.9};
  diff::Tape t;
  std::vector<diff::Var> trace = {t.param(p)};
  auto l = digital_loss(t, trace, s);
  EXPECT_NEAR(l.value(), digital_loss(p.value, s), 1e-15);
  t.backpropagate(l);
  EXPECT_NEAR(p.grad[0], 1.0 / 3, 1e-15);
  EXPECT_NEAR(p.grad[1], 1.0 / 3, 1e-15);
  EXPECT_NEAR(p.grad[2], -1.0 / 3, 1e-15);
}

TEST(DigitalLossProperty, ZeroExactlyWhenOnBin) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> k(0, 5);
  const auto s = BinSpec::sigmoid(6);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> on(8), off(8);
    for (std::size_t j = 0; j < on.size(); ++j) on[j] = s.value(k(rng));
    ASSERT_EQ(digital_loss(on, s), 0.0);
    off = on;
    double a = u(rng);
    while (bin_value(a, s) == a) a = u(rng);
    off[static_cast<std::size_t>(k(rng))] = a;
    ASSERT_GT(digital_loss(off, s), 0.0);
  }
}

TEST(DigitalLossProperty, PermutationInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto s = BinSpec::sigmoid(4);
  std::vector<double> a(32);
  for (auto& v : a) v = u(rng);
  const double base = digital_loss(a, s);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(a.begin(), a.end(), rng);
    EXPECT_NEAR(digital_loss(a, s), base, 1e-14);
  }
}

TEST(CombinedLoss, Endpoints) {
  EXPECT_EQ(combined_loss(0.4, 0.2, 0.0), 0.4);
  EXPECT_EQ(combined_loss(0.4, 0.2, 1.0), 0.2);
  diff::Tape t;
  auto b = t.constant(0.4), d = t.constant(0.2);
  EXPECT_EQ(combined_loss(t, b, d, 0.0).value(), 0.4);
  EXPECT_EQ(combined_loss(t, b, d, 1.0).value(), 0.2);
}

TEST(CombinedLoss, Weighted) { EXPECT_DOUBLE_EQ(combined_loss(0.4, 0.2, 0.25), 0.35); }

TEST(CombinedLoss, RejectsWeightOutsideUnitInterval) {
  EXPECT_THROW(combined_loss(0.4, 0.2, -0.1), std::invalid_argument);
  EXPECT_THROW(combined_loss(0.4, 0.2, 1.5), std::invalid_argument);
}

TEST(FindBinCount, SmallestCountThatKeepsAccuracy) {
  auto r = find_bin_count([](const BinSpec& s) { return s.count >= 4 ? 1.0 : 0.5; }, 1.0, 10);
  ASSERT_TRUE(r.found());
  EXPECT_EQ(*r.count, 4);
  EXPECT_EQ(r.accuracies.size(), 3u);
}

TEST(FindBinCount, TiedAtChanceReturnsTwo) {
  auto r = find_bin_count([](const BinSpec&) { return 0.5; }, 0.5, 10);
  EXPECT_EQ(r.count, 2);
}

TEST(FindBinCount, ReportsFailureAtCap) {
  auto r = find_bin_count([](const BinSpec&) { return 0.9; }, 1.0, 6);
  EXPECT_FALSE(r.found());
  EXPECT_EQ(r.accuracies.size(), 5u);
}

TEST(TargetBinCount, FallsBackToMax) {
  EXPECT_EQ(target_bin_count(3, 5), 3);
  EXPECT_EQ(target_bin_count(std::nullopt, 5), 5);
}
