// Decimal read/write heads over a wrapped external memory, and the recurrent
// unroll that couples them to a controller.

#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ldm/bins.hpp"
#include "ldm/diff.hpp"
#include "ldm/model.hpp"

namespace ldm {

/// Padding fed as external input after the sequence ends.
inline constexpr double kPadInput = -1.0;

// ---- plain scalar head and memory operations ------------------------------

/// Moves a head by `gate * delta` and wraps the result into [0, mem_size).
inline double head_update(double position, double gate, double delta, std::size_t mem_size) {
  const double n = static_cast<double>(mem_size);
  const double moved = gate * (position + delta) + (1.0 - gate) * position;
  double wrapped = std::fmod(moved, n);
  if (wrapped < 0.0) wrapped = 1.0 * wrapped + n;
  if (wrapped >= n) wrapped = 0.0;
  return wrapped;
}

/// Blend of the two cells around `position`, weighted toward the lower cell
/// by one minus the fractional part.
inline double memory_read(std::span<const double> memory, double position) {
  const double j = std::floor(position);
  const auto lo = static_cast<std::size_t>(j);
  const auto hi = (lo + 1) % memory.size();
  const double w = -1.0 * (position - j) + 1.0;
  return w * memory[lo] + (1.0 - w) * memory[hi];
}

inline void memory_write(std::span<double> memory, double position, double value) {
  const double k = std::floor(position);
  const auto lo = static_cast<std::size_t>(k);
  const auto hi = (lo + 1) % memory.size();
  const double w = -1.0 * (position - k) + 1.0;
  memory[lo] = w * value + (1.0 - w) * memory[lo];
  memory[hi] = w * memory[hi] + (1.0 - w) * value;
}

// ---- recorded versions ----------------------------------------------------

inline diff::Var head_update(diff::Tape& tape, diff::Var position, diff::Var gate, diff::Var delta,
                             std::size_t mem_size) {
  const double n = static_cast<double>(mem_size);
  auto moved = tape.lerp(gate, tape.add(position, delta), position);
  auto wrapped = tape.fmod(moved, n);
  if (wrapped.value() < 0.0) wrapped = tape.scale_shift(wrapped, 1.0, n);
  if (wrapped.value() >= n) wrapped = tape.scale_shift(wrapped, 0.0, 0.0);
  return wrapped;
}

inline diff::Var memory_read(diff::Tape& tape, std::span<const diff::Var> memory, diff::Var position) {
  auto j = tape.floor_stopgrad(position);
  const auto lo = static_cast<std::size_t>(j.value());
  const auto hi = (lo + 1) % memory.size();
  auto w = tape.scale_shift(tape.sub(position, j), -1.0, 1.0);
  return tape.lerp(w, memory[lo], memory[hi]);
}

inline void memory_write(diff::Tape& tape, std::span<diff::Var> memory, diff::Var position,
                         diff::Var value) {
  auto k = tape.floor_stopgrad(position);
  const auto lo = static_cast<std::size_t>(k.value());
  const auto hi = (lo + 1) % memory.size();
  auto w = tape.scale_shift(tape.sub(position, k), -1.0, 1.0);
  memory[lo] = tape.lerp(w, value, memory[lo]);
  memory[hi] = tape.lerp(w, memory[hi], value);
}

// ---- controller step ------------------------------------------------------

/// Head controls and next states decoded from one raw controller output.
struct StepControls {
  diff::Var move_read, move_write;
  diff::Var delta_read, delta_write;  // rescaled into (-1, 1)
  diff::Var write_value;
  diff::Var states;
};

inline StepControls decode_controls(diff::Tape& tape, diff::Var raw, std::size_t state_count) {
  StepControls c;
  c.move_read = tape.element(raw, out::move_read);
  c.move_write = tape.element(raw, out::move_write);
  c.delta_read = tape.scale_shift(tape.element(raw, out::delta_read), 2.0, -1.0);
  c.delta_write = tape.scale_shift(tape.element(raw, out::delta_write), 2.0, -1.0);
  c.write_value = tape.element(raw, out::write_value);
  c.states = tape.slice(raw, out::head_controls, state_count);
  return c;
}

/// Anything that maps a controller input to 5 + n raw outputs in [0,1].
template <class C>
concept ControllerLike = requires(const C& c, diff::Tape& tape, diff::Var v, std::size_t step) {
  { c.arch() } -> std::convertible_to<const Architecture&>;
  { c(tape, v, step) } -> std::same_as<diff::Var>;
};

/// One controller evaluation on (x_t, v_r, s), returning the decoded controls.
template <ControllerLike Ctrl>
StepControls controller_step(diff::Tape& tape, const Ctrl& controller, diff::Var external,
                             diff::Var read_value, diff::Var states, std::size_t step = 0) {
  auto raw = controller(tape, tape.concat({external, read_value, states}), step);
  return decode_controls(tape, raw, controller.arch().state_count);
}

// ---- unroll ---------------------------------------------------------------

struct UnrollOptions {
  /// Memory length; 0 selects max(arch.mem_size, default_mem_size(rows)).
  std::size_t mem_size = 0;
  /// Inference-time binning of the binnable sites.
  std::optional<BinSpec> bins;
  /// Called after each iteration with the memory cells after the write.
  std::function<void(std::size_t step, std::span<const diff::Var> memory)> on_memory;
};

struct UnrollResult {
  std::size_t mem_size = 0;
  std::vector<diff::Var> outputs;            // last state after each iteration
  std::vector<diff::Var> controller_inputs;  // (x_t, v_r, s) fed at each iteration
  std::vector<diff::Var> trace;              // binnable sites: raw outputs, read values
  std::vector<double> read_positions;        // after each iteration
  std::vector<double> write_positions;
  std::vector<diff::Var> memory;             // cells after the last iteration
  diff::Var states;
  diff::Var read_value;

  std::vector<double> output_values() const {
    std::vector<double> v;
    v.reserve(outputs.size());
    for (const auto& o : outputs) v.push_back(o.value());
    return v;
  }

  std::vector<double> memory_values() const {
    std::vector<double> v;
    v.reserve(memory.size());
    for (const auto& m : memory) v.push_back(m.value());
    return v;
  }
};

/// Runs `iterations` controller steps over a row-major (rows x input_dim)
/// input; steps past the last row feed kPadInput. Per iteration: controller,
/// write at the current write head, move both heads, read at the new read head.
template <ControllerLike Ctrl>
UnrollResult unroll(diff::Tape& tape, const Ctrl& controller, std::span<const double> input,
                    std::size_t iterations, const UnrollOptions& options = {}) {
  const Architecture& arch = controller.arch();
  const std::size_t d = arch.input_dim;
  if (input.size() % d != 0) throw std::invalid_argument("unroll: input size not a multiple of input_dim");
  const std::size_t rows = input.size() / d;
  if (iterations < rows) throw std::invalid_argument("unroll: fewer iterations than input steps");

  UnrollResult r;
  r.mem_size = options.mem_size ? options.mem_size : std::max(arch.mem_size, default_mem_size(rows));
  const std::size_t n = arch.state_count;

  auto zero = tape.constant(0.0);
  r.memory.assign(r.mem_size, zero);
  const double start = std::floor(static_cast<double>(r.mem_size) / 2.0);
  auto read_pos = tape.constant(start);
  auto write_pos = tape.constant(start);
  r.read_value = zero;
  r.states = tape.constant(std::vector<double>(n, 0.0));
  const std::vector<double> pad(d, kPadInput);

  r.outputs.reserve(iterations);
  r.controller_inputs.reserve(iterations);
  r.trace.reserve(2 * iterations);
  r.read_positions.reserve(iterations);
  r.write_positions.reserve(iterations);

  for (std::size_t t = 0; t < iterations; ++t) {
    auto x = t < rows ? tape.constant(input.subspan(t * d, d)) : tape.constant(pad);
    auto in = tape.concat({x, r.read_value, r.states});
    r.controller_inputs.push_back(in);

    auto raw = controller(tape, in, t);
    if (options.bins) raw = tape.snap(raw, options.bins->min, options.bins->max, options.bins->count);
    r.trace.push_back(raw);
    const auto c = decode_controls(tape, raw, n);

    memory_write(tape, r.memory, write_pos, c.write_value);
    if (options.on_memory) options.on_memory(t, r.memory);

    read_pos = head_update(tape, read_pos, c.move_read, c.delta_read, r.mem_size);
    write_pos = head_update(tape, write_pos, c.move_write, c.delta_write, r.mem_size);

    auto v = memory_read(tape, r.memory, read_pos);
    if (options.bins) v = tape.snap(v, options.bins->min, options.bins->max, options.bins->count);
    r.trace.push_back(v);
    r.read_value = v;
    r.states = c.states;

    r.outputs.push_back(tape.element(raw, out::head_controls + n - 1));
    r.read_positions.push_back(read_pos.value());
    r.write_positions.push_back(write_pos.value());
  }
  return r;
}

/// Convenience overload that records the model's controller as constants.
inline UnrollResult unroll(diff::Tape& tape, const LdmModel& model, std::span<const double> input,
                           std::size_t iterations, const UnrollOptions& options = {}) {
  Controller controller(tape, model);
  return unroll(tape, controller, input, iterations, options);
}

}  // namespace ldm
