#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ldm/analysis.hpp"
#include "scripted.hpp"

using namespace ldm;
using namespace ldm::analysis;

TEST(StateKey, EncodesBinIndices) {
  const auto spec = BinSpec::sigmoid(3);
  const std::vector<double> a = {1.0, 0.5, 0.0, 1.0}, b = {1.0, 0.5, 0.0, 1.0}, c = {-1.0, 0.5, 0.0, 1.0};
  EXPECT_EQ(state_key(a, 1, spec), state_key(b, 1, spec));
  EXPECT_NE(state_key(a, 1, spec), state_key(c, 1, spec));
}

TEST(StateKey, RejectsUnbinnedComponents) {
  const auto spec = BinSpec::sigmoid(3);
  const std::vector<double> off_grid = {1.0, 0.4}, bad_symbol = {0.5, 0.5};
  EXPECT_THROW(state_key(off_grid, 1, spec), std::logic_error);
  EXPECT_THROW(state_key(bad_symbol, 1, spec), std::logic_error);
}

// A constant controller freezes v_r and s at 0.5 after the first step, so
// the states are the first-step inputs (zeros) plus one per later symbol.
TEST(CountStates, ZeroWeightModelSeesOnlyInputSymbols) {
  LdmModel model(Architecture{1, 8, 3, 12});
  for (std::size_t len : {10, 40}) {
    auto copy = count_states(model, BinSpec::sigmoid(3), tasks::Task::copy, len);
    EXPECT_TRUE(copy.plateaued);
    EXPECT_EQ(copy.count, 2u + 3u);
    auto dyck = count_states(model, BinSpec::sigmoid(3), tasks::Task::dyck, len);
    EXPECT_EQ(dyck.count, 2u + 2u);
  }
}

TEST(CountStates, ScriptedCounterPlateausAtItsStateCount) {
  Architecture a{1, 4, 2, 8};
  ldm::testing::CounterController counter(a, 5);
  diff::Tape tape;
  auto r = count_states(tape, counter, BinSpec::sigmoid(5), tasks::Task::dyck, 20);
  EXPECT_TRUE(r.plateaued);
  EXPECT_EQ(r.count, 10u);
}

TEST(CountStates, DeterministicAndMonotoneInSamples) {
  LdmModel model(Architecture{1, 16, 4, 20});
  model.initialize(3);
  const auto spec = BinSpec::sigmoid(4);
  auto first = count_states(model, spec, tasks::Task::dyck, 12);
  auto again = count_states(model, spec, tasks::Task::dyck, 12);
  EXPECT_EQ(first.count, again.count);
  EXPECT_EQ(first.samples_used, again.samples_used);

  std::size_t prev = 0;
  for (std::size_t cap : {2, 4, 8, 16, 32, 64}) {
    CountOptions o;
    o.max_samples = cap;
    auto r = count_states(model, spec, tasks::Task::dyck, 12, o);
    EXPECT_GE(r.count, prev);
    prev = r.count;
  }
}

TEST(CountStates, ReportsNonPlateauAtCap) {
  LdmModel model(Architecture{1, 16, 4, 20});
  model.initialize(8);
  CountOptions o;
  o.max_samples = 2;
  auto r = count_states(model, BinSpec::sigmoid(16), tasks::Task::dyck, 30, o);
  EXPECT_FALSE(r.plateaued);
  EXPECT_EQ(r.samples_used, 2u);
}

TEST(StateSetProperty, OrderIndependent) {
  LdmModel model(Architecture{1, 16, 4, 20});
  model.initialize(6);
  diff::Tape tape;
  Controller c(tape, model);
  const auto mark = tape.mark();
  const auto spec = BinSpec::sigmoid(3);
  auto samples = tasks::generate(tasks::Task::dyck, tasks::LengthRange::exactly(10), 64, 2);
  StateSet forward(spec, 1), shuffled(spec, 1);
  for (const auto& s : samples) forward.add(tape, mark, c, s);
  std::mt19937_64 rng(1);
  std::shuffle(samples.begin(), samples.end(), rng);
  for (const auto& s : samples) shuffled.add(tape, mark, c, s);
  EXPECT_EQ(forward.size(), shuffled.size());
}

TEST(ExponentialFit, RecoversNoiselessCurve) {
  std::vector<double> x, y;
  for (int i = 1; i <= 10; ++i) {
    x.push_back(i);
    y.push_back(2.0 * std::exp(0.1 * i));
  }
  auto f = fit_exponential(x, y);
  EXPECT_FALSE(f.degenerate);
  EXPECT_NEAR(f.a, 2.0, 1e-9);
  EXPECT_NEAR(f.b, 0.1, 1e-9);
  EXPECT_NEAR(f.r2, 1.0, 1e-9);
}

TEST(ExponentialFit, ConstantIsDegenerate) {
  const std::vector<double> x = {50, 100, 200}, y = {76, 76, 76};
  auto f = fit_exponential(x, y);
  EXPECT_TRUE(f.degenerate);
  EXPECT_EQ(f.b, 0.0);
}

TEST(ExponentialFit, NoisyCurveWithinTolerance) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(i * 0.1);
    y.push_back(3.0 * std::exp(0.4 * i * 0.1 + noise(rng)));
  }
  auto f = fit_exponential(x, y);
  EXPECT_LT(f.r2, 1.0);
  EXPECT_GT(f.r2, 0.9);
  // Slope standard error here is about 0.05 / sqrt(sum (x - mean)^2) ~ 0.0012.
  EXPECT_NEAR(f.b, 0.4, 0.005);
  EXPECT_NEAR(std::log(f.a), std::log(3.0), 0.03);
}

TEST(ExponentialFit, RejectsBadInput) {
  const std::vector<double> x = {1, 2, 3}, y = {1, 0, 2}, x2 = {1, 2}, y2 = {1, 2};
  EXPECT_THROW(fit_exponential(x, y), std::invalid_argument);
  EXPECT_THROW(fit_exponential(x2, y2), std::invalid_argument);
}
