#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ldm/diff.hpp"
#include "ldm/gradcheck.hpp"

using namespace ldm::diff;

namespace {

// Central difference of a scalar function of one input vector.
template <class F>
std::vector<double> numeric_grad(F&& f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = x[i];
    x[i] = s + h;
    const double up = f(x);
    x[i] = s - h;
    const double dn = f(x);
    x[i] = s;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

// Checks d sum(op(x)) / dx against central differences for a unary op.
template <class Build>
void check_unary(Build&& build, std::vector<double> x, double tol = 1e-6) {
  Parameter p("x", x.size(), 1);
  p.value = x;
  Tape tape;
  auto out = tape.sum(build(tape, tape.param(p)));
  tape.backpropagate(out);
  const auto num = numeric_grad(
      [&](const std::vector<double>& v) {
        Parameter q("x", v.size(), 1);
        q.value = v;
        Tape t;
        return t.sum(build(t, t.param(q))).value();
      },
      x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(p.grad[i], num[i], tol) << "index " << i;
}

std::vector<double> away_from_kinks(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> x(n);
  for (auto& v : x) v = sign(rng) ? u(rng) : -u(rng);
  return x;
}

}  // namespace

TEST(Tape, SigmoidAtZero) {
  Tape t;
  EXPECT_DOUBLE_EQ(t.sigmoid(t.constant(0.0)).value(), 0.5);
}

TEST(Tape, ReluNegativeHasZeroValueAndDerivative) {
  Parameter p("x", 1, 1);
  p.value = {-2.0};
  Tape t;
  auto y = t.relu(t.param(p));
  EXPECT_EQ(y.value(), 0.0);
  t.backpropagate(y);
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Tape, ReluSubgradientAtZeroIsZero) {
  Parameter p("x", 1, 1);
  Tape t;
  t.backpropagate(t.relu(t.param(p)));
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Tape, AbsSubgradientAtZeroIsZero) {
  Parameter p("x", 1, 1);
  Tape t;
  t.backpropagate(t.abs(t.param(p)));
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Tape, FmodKeepsFraction) {
  Parameter p("x", 1, 1);
  p.value = {8.4};
  Tape t;
  auto y = t.fmod(t.param(p), 8.0);
  EXPECT_NEAR(y.value(), 0.4, 1e-12);
  t.backpropagate(y);
  EXPECT_EQ(p.grad[0], 1.0);
}

TEST(Tape, FmodRejectsNonPositiveModulus) {
  Tape t;
  auto x = t.constant(1.0);
  EXPECT_THROW(t.fmod(x, 0.0), std::domain_error);
  EXPECT_THROW(t.fmod(x, -3.0), std::domain_error);
}

TEST(Tape, SquareGradient) {
  Parameter p("x", 1, 1);
  p.value = {3.0};
  Tape t;
  auto x = t.param(p);
  t.backpropagate(x * x);
  EXPECT_DOUBLE_EQ(p.grad[0], 6.0);
}

TEST(Tape, FloorStopgradBlocksGradient) {
  Parameter p("x", 1, 1);
  p.value = {2.7};
  Tape t;
  auto y = t.floor_stopgrad(t.param(p));
  EXPECT_EQ(y.value(), 2.0);
  t.backpropagate(y);
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Tape, SnapIsForwardOnly) {
  Parameter p("x", 3, 1);
  p.value = {0.1, 0.3, 0.74};
  Tape t;
  auto y = t.snap(t.param(p), 0.0, 1.0, 3);
  EXPECT_EQ(y.value(0), 0.0);
  EXPECT_EQ(y.value(1), 0.5);
  EXPECT_EQ(y.value(2), 0.5);
  t.backpropagate(t.sum(y));
  for (double g : p.grad) EXPECT_EQ(g, 0.0);
}

TEST(Tape, ConstantLossHasZeroGradient) {
  Parameter p("x", 4, 1);
  p.value = {1, 2, 3, 4};
  Tape t;
  t.param(p);
  t.backpropagate(t.constant(5.0));
  for (double g : p.grad) EXPECT_EQ(g, 0.0);
}

TEST(Tape, GradientsAccumulateAcrossPasses) {
  Parameter p("x", 1, 1);
  p.value = {2.0};
  for (int i = 0; i < 3; ++i) {
    Tape t;
    auto x = t.param(p);
    t.backpropagate(x * x);
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 12.0);
}

TEST(Tape, RewindDropsLaterNodes) {
  Tape t;
  auto a = t.constant(1.5);
  const auto m = t.mark();
  t.add(a, a);
  t.add(a, a);
  t.rewind(m);
  EXPECT_EQ(t.node_count(), m);
  EXPECT_DOUBLE_EQ(t.add(a, a).value(), 3.0);
}

TEST(Tape, MinReduceTakesFirstOnTies) {
  Parameter a("a", 2, 1), b("b", 2, 1);
  a.value = {1.0, 3.0};
  b.value = {1.0, 2.0};
  Tape t;
  auto m = t.min_reduce({t.param(a), t.param(b)});
  EXPECT_EQ(m.value(0), 1.0);
  EXPECT_EQ(m.value(1), 2.0);
  t.backpropagate(t.sum(m));
  EXPECT_EQ(a.grad[0], 1.0);
  EXPECT_EQ(b.grad[0], 0.0);
  EXPECT_EQ(a.grad[1], 0.0);
  EXPECT_EQ(b.grad[1], 1.0);
}

TEST(Tape, BceAtHalfIsLnTwo) {
  Tape t;
  const std::vector<double> y = {1.0, 0.0};
  auto l = t.bce(t.constant(std::vector<double>{0.5, 0.5}), y);
  EXPECT_NEAR(l.value(), 2 * std::log(2.0), 1e-12);
}

TEST(TapeProperty, UnaryOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = away_from_kinks(rng, 5);
    check_unary([](Tape& t, Var v) { return t.sigmoid(v); }, x);
    check_unary([](Tape& t, Var v) { return t.relu(v); }, x);
    check_unary([](Tape& t, Var v) { return t.abs(v); }, x);
    check_unary([](Tape& t, Var v) { return t.scale_shift(v, -1.7, 0.3); }, x);
    check_unary([](Tape& t, Var v) { return t.mul(v, v); }, x);
    check_unary([](Tape& t, Var v) { return t.sub(t.constant(0.25), v); }, x);
    check_unary([](Tape& t, Var v) { return t.slice(v, 1, 3); }, x);
    check_unary([](Tape& t, Var v) { return t.scale_shift(t.element(v, 4), 3.0, 0.0); }, x);
    check_unary([](Tape& t, Var v) { return t.concat({v, t.mul(v, v)}); }, x);
    check_unary([](Tape& t, Var v) { return t.min_reduce({v, t.scale_shift(v, -1.0, 0.05)}); }, x);
  }
}

TEST(TapeProperty, FmodAndLerpMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x = {u(rng), u(rng), 3.0 + u(rng)};
    check_unary(
        [](Tape& t, Var v) {
          return t.lerp(t.element(v, 0), t.element(v, 1), t.fmod(t.element(v, 2), 2.0));
        },
        x);
    check_unary([](Tape& t, Var v) { return t.lerp(t.element(v, 0), v, t.scale_shift(v, 2.0, 1.0)); }, x);
  }
}

TEST(TapeProperty, BceMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const std::vector<double> y = {1, 0, 1, 1};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x = {u(rng), u(rng), u(rng), u(rng)};
    check_unary([&](Tape& t, Var v) { return t.bce(v, y); }, x, 1e-5);
  }
}

TEST(TapeProperty, AffineMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(0.0, 1.0);
  Parameter w("w", 3, 4), b("b", 3, 1);
  for (auto& v : w.value) v = g(rng);
  for (auto& v : b.value) v = g(rng);
  const std::vector<double> x0 = {0.3, -1.2, 0.8, 2.0};
  check_unary(
      [&](Tape& t, Var x) { return t.sigmoid(t.affine(t.constant(w.value), t.constant(b.value), x)); },
      x0);
}

TEST(TapeProperty, TwoLayerNetworkGradientCheck) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.7);
  Parameter w1("w1", 6, 3), b1("b1", 6, 1), w2("w2", 2, 6), b2("b2", 2, 1);
  for (auto* p : {&w1, &b1, &w2, &b2})
    for (auto& v : p->value) v = g(rng);
  const std::vector<double> x = {0.5, -0.4, 1.1};
  const std::vector<double> y = {1.0, 0.0};
  std::vector<Parameter*> params = {&w1, &b1, &w2, &b2};
  auto report = finite_difference_check(
      params,
      [&](Tape& t) {
        auto h = t.relu(t.affine(t.param(w1), t.param(b1), t.constant(x)));
        return t.bce(t.sigmoid(t.affine(t.param(w2), t.param(b2), h)), y);
      },
      1e-5, 1e-6);
  EXPECT_EQ(report.checked, 6 * 3 + 6 + 2 * 6 + 2);
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
}

TEST(TapeProperty, QuadraticGradientIsExactToRoundoff) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Parameter p("x", 8, 1);
  for (auto& v : p.value) v = g(rng);
  std::vector<Parameter*> params = {&p};
  auto report = finite_difference_check(
      params, [&](Tape& t) { auto x = t.param(p); return t.sum(t.mul(x, x)); }, 1e-5, 1e-6, 0.0);
  EXPECT_LT(report.max_rel_error, 1e-6);
}

TEST(TapeProperty, Deterministic) {
  auto run = [] {
    Parameter p("x", 3, 1);
    p.value = {0.1, -0.7, 2.3};
    Tape t;
    auto x = t.param(p);
    auto y = t.sum(t.sigmoid(t.mul(x, t.relu(t.scale_shift(x, 2.0, 0.5)))));
    t.backpropagate(y);
    auto out = p.grad;
    out.push_back(y.value());
    return out;
  };
  EXPECT_EQ(run(), run());
}
