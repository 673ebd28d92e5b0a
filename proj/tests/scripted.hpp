// Test controllers whose raw outputs come from a fixed script instead of a
// network, plus a discrete tape simulator to compare them against.

#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <vector>

#include "ldm/machine.hpp"

namespace ldm::testing {

/// One integer move per step: gates in {0,1}, offsets in {-1,0,1}, bit written.
struct Move {
  int gate_read = 0, gate_write = 0;
  int delta_read = 0, delta_write = 0;
  int value = 0;
};

inline std::vector<Move> random_script(std::mt19937_64& rng, std::size_t steps) {
  std::uniform_int_distribution<int> bit(0, 1), off(-1, 1);
  std::vector<Move> s(steps);
  for (auto& m : s) m = {bit(rng), bit(rng), off(rng), off(rng), bit(rng)};
  return s;
}

/// Emits the raw outputs that decode to the scripted move; states stay 0.
class ScriptedController {
 public:
  ScriptedController(Architecture arch, std::vector<Move> script) : arch_(arch), script_(std::move(script)) {}

  const Architecture& arch() const { return arch_; }

  diff::Var operator()(diff::Tape& tape, diff::Var, std::size_t step) const {
    const auto& m = script_[step];
    std::vector<double> raw(arch_.controller_outputs(), 0.0);
    raw[out::move_read] = m.gate_read;
    raw[out::move_write] = m.gate_write;
    raw[out::delta_read] = (m.delta_read + 1) / 2.0;
    raw[out::delta_write] = (m.delta_write + 1) / 2.0;
    raw[out::write_value] = m.value;
    return tape.constant(raw);
  }

 private:
  Architecture arch_;
  std::vector<Move> script_;
};

/// Integer tape with the same step order as the unroll.
struct TapeSim {
  std::vector<double> cells;
  long read = 0, write = 0;

  explicit TapeSim(std::size_t n) : cells(n, 0.0), read(static_cast<long>(n / 2)), write(read) {}

  double step(const Move& m) {
    const long n = static_cast<long>(cells.size());
    cells[static_cast<std::size_t>(write)] = m.value;
    read = ((read + m.gate_read * m.delta_read) % n + n) % n;
    write = ((write + m.gate_write * m.delta_write) % n + n) % n;
    return cells[static_cast<std::size_t>(read)];
  }
};

/// Counter mod `period` held in one state variable as k / (period - 1); the
/// last state slot mirrors it. Every state vector it visits lies on the
/// grid of a `period`-bin sigmoid spec.
class CounterController {
 public:
  CounterController(Architecture arch, int period) : arch_(arch), period_(period) {}

  const Architecture& arch() const { return arch_; }

  diff::Var operator()(diff::Tape& tape, diff::Var in, std::size_t) const {
    const std::size_t d = arch_.input_dim;
    const double s = in.value(d + 1);
    const int k = static_cast<int>(std::lround(s * (period_ - 1)));
    const double next = static_cast<double>((k + 1) % period_) / (period_ - 1);
    std::vector<double> raw(arch_.controller_outputs(), 0.0);
    raw[out::head_controls] = next;
    raw.back() = next;
    return tape.constant(raw);
  }

 private:
  Architecture arch_;
  int period_;
};

}  // namespace ldm::testing
