// Activation binning, the digital loss and the bin-count search.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ldm/diff.hpp"

namespace ldm {

/// `count` equally spaced values from `min` to `max`, both endpoints included.
struct BinSpec {
  double min = 0.0;
  double max = 1.0;
  int count = 2;

  BinSpec() = default;
  BinSpec(double lo, double hi, int n) : min(lo), max(hi), count(n) {
    if (n < 2) throw std::invalid_argument("BinSpec: count must be at least 2");
    if (!(hi > lo)) throw std::invalid_argument("BinSpec: max must exceed min");
  }

  static BinSpec sigmoid(int n) { return {0.0, 1.0, n}; }
  static BinSpec tanh(int n) { return {-1.0, 1.0, n}; }

  double spacing() const { return (max - min) / (count - 1); }

  double value(int k) const { return k == count - 1 ? max : min + k * spacing(); }

  std::vector<double> values() const {
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = value(k);
    return out;
  }

  /// Index of the nearest bin; exact midpoints go to the lower index.
  int index_of(double a) const {
    double t = (a - min) / spacing();
    if (!(t > 0.0)) return 0;
    if (t >= count - 1) return count - 1;
    return static_cast<int>(std::ceil(t - 0.5));
  }

  friend bool operator==(const BinSpec&, const BinSpec&) = default;
};

inline double bin_value(double a, const BinSpec& spec) { return spec.value(spec.index_of(a)); }

/// Mean over activations of the distance to the nearest bin value.
inline double digital_loss(std::span<const double> activations, const BinSpec& spec) {
  if (activations.empty()) throw std::invalid_argument("digital_loss: empty trace");
  const auto bins = spec.values();
  double total = 0.0;
  for (double a : activations) {
    double best = std::fabs(a - bins[0]);
    for (std::size_t k = 1; k < bins.size(); ++k) best = std::min(best, std::fabs(a - bins[k]));
    total += best;
  }
  return total / static_cast<double>(activations.size());
}

/// Differentiable digital loss over a trace of recorded activations. Each trace
/// entry may be a vector; c counts scalars.
inline diff::Var digital_loss(diff::Tape& tape, std::span<const diff::Var> trace,
                              const BinSpec& spec) {
  if (trace.empty()) throw std::invalid_argument("digital_loss: empty trace");
  auto all = trace.size() == 1 ? trace[0] : tape.concat(trace);
  const auto c = all.size();
  std::vector<diff::Var> distances;
  distances.reserve(static_cast<std::size_t>(spec.count));
  for (double b : spec.values()) distances.push_back(tape.abs(tape.sub(all, tape.constant(b))));
  auto nearest = tape.min_reduce(distances);
  return tape.scale_shift(tape.sum(nearest), 1.0 / static_cast<double>(c), 0.0);
}

inline double combined_loss(double baseline, double digital, double weight) {
  if (weight < 0.0 || weight > 1.0) throw std::invalid_argument("combined_loss: weight outside [0,1]");
  return weight * digital + (1.0 - weight) * baseline;
}

inline diff::Var combined_loss(diff::Tape& tape, diff::Var baseline, diff::Var digital,
                               double weight) {
  if (weight < 0.0 || weight > 1.0) throw std::invalid_argument("combined_loss: weight outside [0,1]");
  if (weight == 0.0) return baseline;
  if (weight == 1.0) return digital;
  return tape.add(tape.scale_shift(digital, weight, 0.0), tape.scale_shift(baseline, 1.0 - weight, 0.0));
}

/// Bin count used by the digital loss: min(found bin count, max target bins).
inline int target_bin_count(std::optional<int> found, int max_target_bins) {
  return found ? std::min(*found, max_target_bins) : max_target_bins;
}

struct BinSearchResult {
  std::optional<int> count;          // empty when no count up to the cap suffices
  std::vector<double> accuracies;    // binned accuracy for 2, 3, ... in order tried
  double unbinned_accuracy = 0.0;

  bool found() const { return count.has_value(); }
};

/// Smallest bin count in [2, cap] whose binned accuracy reaches `unbinned`.
/// `binned_accuracy(spec)` evaluates the validation set with binning active.
inline BinSearchResult find_bin_count(const std::function<double(const BinSpec&)>& binned_accuracy,
                                      double unbinned, int cap, double lo = 0.0, double hi = 1.0) {
  if (cap < 2) throw std::invalid_argument("find_bin_count: cap must be at least 2");
  BinSearchResult result;
  result.unbinned_accuracy = unbinned;
  for (int n = 2; n <= cap; ++n) {
    const double acc = binned_accuracy(BinSpec(lo, hi, n));
    result.accuracies.push_back(acc);
    if (acc >= unbinned) {
      result.count = n;
      break;
    }
  }
  return result;
}

}  // namespace ldm
