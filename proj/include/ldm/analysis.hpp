// Counting distinct computational states of a binned network, and the
// exponential growth fit used to compare state-count curves.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "ldm/bins.hpp"
#include "ldm/diff.hpp"
#include "ldm/machine.hpp"
#include "ldm/tasks.hpp"

namespace ldm::analysis {

/// Packs one binned controller input (x_t, v_r, s) into a byte key. External
/// inputs must be symbols in {-1, 0, 1}; every other component must sit
/// exactly on a bin value, and is stored as its bin index.
inline std::string state_key(std::span<const double> controller_input, std::size_t input_dim,
                             const BinSpec& spec) {
  std::string key(controller_input.size(), '\0');
  for (std::size_t i = 0; i < controller_input.size(); ++i) {
    const double v = controller_input[i];
    int code = 0;
    if (i < input_dim) {
      if (v != -1.0 && v != 0.0 && v != 1.0) throw std::logic_error("state_key: input is not a symbol");
      code = static_cast<int>(v) + 1;
    } else {
      code = spec.index_of(v);
      if (spec.value(code) != v) throw std::logic_error("state_key: unbinned component");
    }
    key[i] = static_cast<char>(code);
  }
  return key;
}

struct StatePlateau {
  std::size_t length = 0;
  std::size_t count = 0;
  std::size_t samples_used = 0;
  bool plateaued = false;
};

struct CountOptions {
  std::size_t initial_samples = 2;
  std::size_t max_samples = std::size_t{1} << 18;
  std::uint64_t seed = 1;
};

/// Distinct binned states seen across every iteration of the given samples.
class StateSet {
 public:
  StateSet(const BinSpec& spec, std::size_t input_dim) : spec_(spec), input_dim_(input_dim) {}

  /// Unrolls `s` on `tape` past `mark` and records every controller input.
  template <ControllerLike Ctrl>
  void add(diff::Tape& tape, std::size_t mark, const Ctrl& controller, const tasks::TaskSample& s) {
    tape.rewind(mark);
    UnrollOptions opts;
    opts.bins = spec_;
    const auto run = unroll(tape, controller, s.input, s.iterations, opts);
    for (const auto& in : run.controller_inputs) keys_.insert(state_key(in.values(), input_dim_, spec_));
  }

  std::size_t size() const { return keys_.size(); }

 private:
  BinSpec spec_;
  std::size_t input_dim_;
  std::unordered_set<std::string> keys_;
};

/// Doubles the sample count until the distinct-state count is unchanged over
/// two consecutive doublings, or the sample cap is reached. Samples are
/// drawn from the task generator at exactly `length`. `tape` must hold any
/// nodes the controller refers to.
template <ControllerLike Ctrl>
StatePlateau count_states(diff::Tape& tape, const Ctrl& controller, const BinSpec& spec, tasks::Task task,
                          std::size_t length, const CountOptions& options = {}) {
  if (length < 1) throw std::invalid_argument("count_states: length must be positive");
  if (options.initial_samples < 1) throw std::invalid_argument("count_states: need at least one sample");
  StatePlateau result;
  result.length = length;
  StateSet states(spec, controller.arch().input_dim);
  const auto mark = tape.mark();

  std::size_t used = 0, target = options.initial_samples, unchanged = 0, round = 0;
  std::optional<std::size_t> previous;
  while (true) {
    const auto batch = tasks::generate(task, tasks::LengthRange::exactly(length), target - used,
                                       options.seed * 0x9E3779B97F4A7C15ULL + round);
    for (const auto& s : batch) states.add(tape, mark, controller, s);
    used = target;
    ++round;
    unchanged = previous && *previous == states.size() ? unchanged + 1 : 0;
    previous = states.size();
    if (unchanged >= 2) {
      result.plateaued = true;
      break;
    }
    if (target >= options.max_samples) break;
    target = std::min(2 * target, options.max_samples);
  }
  tape.rewind(mark);
  result.count = states.size();
  result.samples_used = used;
  return result;
}

inline StatePlateau count_states(const LdmModel& model, const BinSpec& spec, tasks::Task task,
                                 std::size_t length, const CountOptions& options = {}) {
  diff::Tape tape;
  Controller controller(tape, model);
  return count_states(tape, controller, spec, task, length, options);
}

// ---- exponential fit ------------------------------------------------------

struct ExpFit {
  double a = 0.0;  // y = a * exp(b * x)
  double b = 0.0;
  double r2 = 0.0;
  bool degenerate = false;  // zero variance in ln y (or x): R^2 undefined
};

/// Least squares on (x, ln y).
inline ExpFit fit_exponential(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_exponential: size mismatch");
  if (xs.size() < 3) throw std::invalid_argument("fit_exponential: need at least 3 points");
  const double n = static_cast<double>(xs.size());
  std::vector<double> ly(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!(ys[i] > 0.0)) throw std::invalid_argument("fit_exponential: y must be positive");
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  auto constant = [](auto& v) { return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; }); };
  ExpFit fit;
  if (constant(xs) || constant(ly) || sxx == 0.0 || syy == 0.0) {
    fit.degenerate = true;
    fit.b = 0.0;
    fit.a = std::exp(my);
    return fit;
  }
  fit.b = sxy / sxx;
  const double intercept = my - fit.b * mx;
  fit.a = std::exp(intercept);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ly[i] - (intercept + fit.b * xs[i]);
    ss_res += e * e;
  }
  fit.r2 = 1.0 - ss_res / syy;
  return fit;
}

struct StateCountCurve {
  std::vector<StatePlateau> points;
  std::optional<ExpFit> fit;  // empty with fewer than 3 lengths
};

}  // namespace ldm::analysis
