// Controller parameters and architecture hyperparameters of an LDM network.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "ldm/diff.hpp"

namespace ldm {

/// Controller output layout: head controls first, then the recurrent states.
/// The last state doubles as the network output.
namespace out {
inline constexpr std::size_t move_read = 0;
inline constexpr std::size_t move_write = 1;
inline constexpr std::size_t delta_read = 2;
inline constexpr std::size_t delta_write = 3;
inline constexpr std::size_t write_value = 4;
inline constexpr std::size_t head_controls = 5;
}  // namespace out

struct Architecture {
  std::size_t input_dim = 1;
  std::size_t hidden_units = 64;
  std::size_t state_count = 6;
  std::size_t mem_size = 44;

  /// External inputs, one read value, the recurrent states.
  std::size_t controller_inputs() const { return input_dim + 1 + state_count; }
  std::size_t controller_outputs() const { return out::head_controls + state_count; }

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("architecture: input_dim must be positive");
    if (hidden_units == 0) throw std::invalid_argument("architecture: hidden_units must be positive");
    if (state_count == 0) throw std::invalid_argument("architecture: state_count must be positive");
    if (mem_size < 2) throw std::invalid_argument("architecture: mem_size must be at least 2");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Default memory length for sequences of up to `max_len` steps.
inline std::size_t default_mem_size(std::size_t max_len) { return 2 * max_len + 4; }

/// One-hidden-layer controller: ReLU hidden layer, sigmoid output layer.
class LdmModel {
 public:
  LdmModel() : LdmModel(Architecture{}) {}

  explicit LdmModel(const Architecture& arch)
      : arch_(arch),
        w1_("w1", arch.hidden_units, arch.controller_inputs()),
        b1_("b1", arch.hidden_units, 1),
        w2_("w2", arch.controller_outputs(), arch.hidden_units),
        b2_("b2", arch.controller_outputs(), 1) {
    arch_.validate();
  }

  /// Glorot-uniform weights, zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto* p : {&w1_, &w2_}) {
      const double limit = std::sqrt(6.0 / static_cast<double>(p->rows + p->cols));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& w : p->value) w = dist(rng);
    }
    std::fill(b1_.value.begin(), b1_.value.end(), 0.0);
    std::fill(b2_.value.begin(), b2_.value.end(), 0.0);
  }

  const Architecture& arch() const { return arch_; }
  Architecture& arch() { return arch_; }

  std::vector<diff::Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
  std::vector<const diff::Parameter*> parameters() const { return {&w1_, &b1_, &w2_, &b2_}; }

  std::size_t parameter_count() const {
    return w1_.size() + b1_.size() + w2_.size() + b2_.size();
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  diff::Parameter& w1() { return w1_; }
  diff::Parameter& b1() { return b1_; }
  diff::Parameter& w2() { return w2_; }
  diff::Parameter& b2() { return b2_; }
  const diff::Parameter& w1() const { return w1_; }
  const diff::Parameter& b1() const { return b1_; }
  const diff::Parameter& w2() const { return w2_; }
  const diff::Parameter& b2() const { return b2_; }

 private:
  Architecture arch_;
  diff::Parameter w1_, b1_, w2_, b2_;
};

/// The controller network recorded on a tape. Binding a mutable model makes
/// the weights trainable leaves; binding a const model records constants.
class Controller {
 public:
  Controller(diff::Tape& tape, LdmModel& model)
      : w1_(tape.param(model.w1())),
        b1_(tape.param(model.b1())),
        w2_(tape.param(model.w2())),
        b2_(tape.param(model.b2())),
        arch_(model.arch()) {}

  Controller(diff::Tape& tape, const LdmModel& model)
      : w1_(tape.constant(model.w1().value)),
        b1_(tape.constant(model.b1().value)),
        w2_(tape.constant(model.w2().value)),
        b2_(tape.constant(model.b2().value)),
        arch_(model.arch()) {}

  const Architecture& arch() const { return arch_; }

  /// Raw sigmoid outputs in (0,1), before any rescaling.
  diff::Var operator()(diff::Tape& tape, diff::Var input, std::size_t /*step*/) const {
    auto hidden = tape.relu(tape.affine(w1_, b1_, input));
    return tape.sigmoid(tape.affine(w2_, b2_, hidden));
  }

 private:
  diff::Var w1_, b1_, w2_, b2_;
  Architecture arch_;
};

}  // namespace ldm
