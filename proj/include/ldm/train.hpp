// Losses, evaluation and the curriculum training loop.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldm/bins.hpp"
#include "ldm/diff.hpp"
#include "ldm/machine.hpp"
#include "ldm/model.hpp"
#include "ldm/optim.hpp"
#include "ldm/tasks.hpp"

namespace ldm {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDecisionThreshold = 0.5;

// ---- losses ---------------------------------------------------------------

/// Mean binary cross-entropy over the masked steps.
inline double baseline_loss(std::span<const double> outputs, std::span<const double> target,
                            std::span<const std::uint8_t> mask) {
  if (outputs.size() != target.size() || mask.size() != target.size())
    throw std::invalid_argument("baseline_loss: shape mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!mask[i]) continue;
    const double q = std::clamp(outputs[i], kProbClamp, 1.0 - kProbClamp);
    total -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("baseline_loss: empty mask");
  return total / static_cast<double>(count);
}

inline diff::Var baseline_loss(diff::Tape& tape, std::span<const diff::Var> outputs,
                               std::span<const double> target, std::span<const std::uint8_t> mask) {
  if (outputs.size() != target.size() || mask.size() != target.size())
    throw std::invalid_argument("baseline_loss: shape mismatch");
  std::vector<diff::Var> picked;
  std::vector<double> wanted;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!mask[i]) continue;
    picked.push_back(outputs[i]);
    wanted.push_back(target[i]);
  }
  if (picked.empty()) throw std::invalid_argument("baseline_loss: empty mask");
  auto joined = picked.size() == 1 ? picked[0] : tape.concat(picked);
  auto total = tape.bce(joined, wanted, kProbClamp);
  return tape.scale_shift(total, 1.0 / static_cast<double>(picked.size()), 0.0);
}

// ---- prediction and accuracy ----------------------------------------------

inline int decide(double output) { return output >= kDecisionThreshold ? 1 : 0; }

/// Whole-sequence exact match over the masked steps.
inline bool sample_correct(const tasks::TaskSample& s, std::span<const double> outputs) {
  for (std::size_t i = 0; i < s.iterations; ++i)
    if (s.mask[i] && decide(outputs[i]) != static_cast<int>(s.target[i])) return false;
  return true;
}

/// Outputs of one unroll with the model's weights recorded as constants.
inline std::vector<double> predict(const LdmModel& model, const tasks::TaskSample& s,
                                   const std::optional<BinSpec>& bins = std::nullopt) {
  diff::Tape tape;
  UnrollOptions opts;
  opts.bins = bins;
  return unroll(tape, model, s.input, s.iterations, opts).output_values();
}

inline double accuracy(const LdmModel& model, std::span<const tasks::TaskSample> samples,
                       const std::optional<BinSpec>& bins = std::nullopt) {
  if (samples.empty()) throw std::invalid_argument("accuracy: empty sample set");
  diff::Tape tape;
  Controller controller(tape, model);
  const auto mark = tape.mark();
  UnrollOptions opts;
  opts.bins = bins;
  std::size_t right = 0;
  for (const auto& s : samples) {
    tape.rewind(mark);
    const auto run = unroll(tape, controller, s.input, s.iterations, opts);
    if (sample_correct(s, run.output_values())) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(samples.size());
}

/// Bin-count search on a validation set, sigmoid range [0, 1].
inline BinSearchResult find_bin_count(const LdmModel& model, std::span<const tasks::TaskSample> validation,
                                      double unbinned, int cap) {
  if (validation.empty()) throw std::invalid_argument("find_bin_count: empty validation set");
  return find_bin_count([&](const BinSpec& spec) { return accuracy(model, validation, spec); }, unbinned,
                        cap);
}

// ---- evaluation report ----------------------------------------------------

struct EvalRow {
  std::size_t length = 0;
  double accuracy = 0.0;
  bool binned = false;
  int bin_count = 0;  // 0 when unbinned
  std::size_t samples = 0;
  std::string error;  // nonempty when the length could not be evaluated
};

struct EvalReport {
  tasks::Task task = tasks::Task::sum;
  std::vector<EvalRow> rows;

  std::optional<double> accuracy_at(std::size_t length, bool binned) const {
    for (const auto& r : rows)
      if (r.length == length && r.binned == binned && r.error.empty()) return r.accuracy;
    return std::nullopt;
  }
};

/// Accuracy per length on `count` seeded samples of exactly that length.
inline EvalReport evaluate(const LdmModel& model, tasks::Task task, std::span<const std::size_t> lengths,
                           std::size_t count, std::uint64_t seed, const std::optional<BinSpec>& bins) {
  EvalReport report;
  report.task = task;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    EvalRow row;
    row.length = lengths[i];
    row.binned = bins.has_value();
    row.bin_count = bins ? bins->count : 0;
    row.samples = count;
    try {
      const auto set = tasks::generate(task, tasks::LengthRange::exactly(lengths[i]), count, seed + i);
      row.accuracy = accuracy(model, set, bins);
    } catch (const std::bad_alloc&) {
      row.error = "out of memory";
    } catch (const std::length_error& e) {
      row.error = e.what();
    }
    report.rows.push_back(row);
  }
  return report;
}

// ---- training -------------------------------------------------------------

struct TrainConfig {
  tasks::Task task = tasks::Task::sum;
  std::size_t train_min_len = 8;
  std::size_t train_max_len = 20;
  std::size_t validation_len = 30;
  std::vector<std::size_t> test_lengths = {200, 900};
  std::size_t batch_size = 32;
  AdamSettings adam;
  bool digital_loss = true;
  double digital_weight = 0.1;
  std::size_t digital_start_step = 0;  // steps trained on the task loss alone
  int max_target_bins = 5;
  int bin_search_cap = 64;
  std::size_t curriculum_step = 2;
  double promotion_threshold = 0.95;
  std::size_t promotion_window = 200;
  std::uint64_t seed = 1;
  std::size_t max_steps = 200000;
  std::size_t hidden_units = 64;
  std::size_t state_count = 6;
  std::size_t mem_size = 0;  // 0: default_mem_size(train_max_len)
  std::size_t eval_interval = 500;
  std::size_t validation_count = 1024;
  std::size_t test_count = 100;

  Architecture architecture() const {
    Architecture a;
    a.input_dim = tasks::input_dim(task);
    a.hidden_units = hidden_units;
    a.state_count = state_count;
    a.mem_size = mem_size ? mem_size : default_mem_size(train_max_len);
    return a;
  }

  void validate() const {
    tasks::LengthRange(train_min_len, train_max_len);
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (digital_weight < 0.0 || digital_weight > 1.0) throw std::invalid_argument("digital_weight outside [0,1]");
    if (max_target_bins < 2) throw std::invalid_argument("max_target_bins must be at least 2");
    if (bin_search_cap < 2) throw std::invalid_argument("bin_search_cap must be at least 2");
    if (curriculum_step == 0) throw std::invalid_argument("curriculum_step must be positive");
    if (promotion_window == 0) throw std::invalid_argument("promotion_window must be positive");
    if (eval_interval == 0) throw std::invalid_argument("eval_interval must be positive");
    if (validation_count == 0 || test_count == 0) throw std::invalid_argument("sample counts must be positive");
    if (test_lengths.empty()) throw std::invalid_argument("test_lengths must not be empty");
  }
};

/// The fixed validation set used for stopping and bin search.
inline std::vector<tasks::TaskSample> validation_samples(const TrainConfig& c) {
  return tasks::generate(c.task, tasks::LengthRange::exactly(c.validation_len), c.validation_count,
                         c.seed ^ 0x5eedULL);
}

struct TrainLogEntry {
  std::size_t step = 0;
  std::size_t curriculum_max = 0;
  double train_loss = 0.0;
  double digital_loss = 0.0;
  double validation_accuracy = 0.0;
  int target_bins = 0;  // digital-loss bin count for the following steps
};

struct TrainResult {
  LdmModel model;
  bool converged = false;
  std::size_t steps = 0;
  std::vector<TrainLogEntry> log;
  double validation_accuracy = 0.0;
  BinSearchResult bin_search;
  EvalReport report;  // unbinned and (when bin search succeeded) binned rows
};

/// Loss of one sample recorded on `tape`: combined baseline and digital loss.
struct SampleLoss {
  diff::Var total;
  double baseline = 0.0;
  double digital = 0.0;
  bool correct = false;
};

inline SampleLoss sample_loss(diff::Tape& tape, LdmModel& model, const tasks::TaskSample& s,
                              const std::optional<BinSpec>& digital_bins, double digital_weight) {
  Controller controller(tape, model);
  const auto run = unroll(tape, controller, s.input, s.iterations);
  SampleLoss out;
  auto base = baseline_loss(tape, run.outputs, s.target, s.mask);
  out.baseline = base.value();
  out.correct = sample_correct(s, run.output_values());
  if (digital_bins && digital_weight > 0.0) {
    auto dig = digital_loss(tape, run.trace, *digital_bins);
    out.digital = dig.value();
    out.total = combined_loss(tape, base, dig, digital_weight);
  } else {
    out.total = base;
  }
  return out;
}

/// Curriculum trainer. Lengths start at [min, min]; the upper bound grows by
/// `curriculum_step` whenever the rolling accuracy over the last
/// `promotion_window` training samples (scored before their update) reaches
/// the promotion threshold. Training stops when the full range is active,
/// validation accuracy is 1 and a bin count <= max_target_bins preserves it.
class Trainer {
 public:
  using LogSink = std::function<void(const TrainLogEntry&)>;

  explicit Trainer(TrainConfig config, LogSink sink = {})
      : config_(std::move(config)), sink_(std::move(sink)), model_(config_.architecture()),
        optimizer_(model_.parameters(), config_.adam), rng_(config_.seed) {
    config_.validate();
    model_.initialize(config_.seed);
    curriculum_max_ = config_.train_min_len;
    validation_ = validation_samples(config_);
  }

  const LdmModel& model() const { return model_; }
  LdmModel& model() { return model_; }
  std::size_t curriculum_max() const { return curriculum_max_; }
  std::size_t steps() const { return step_; }

  /// One optimizer step on a fresh batch. Returns the mean sample loss.
  double step() {
    const tasks::LengthRange range(config_.train_min_len, curriculum_max_);
    const auto batch = tasks::generate(config_.task, range, config_.batch_size, rng_());
    const bool digital = config_.digital_loss && step_ >= config_.digital_start_step;
    const std::optional<BinSpec> dbins = digital ? std::optional<BinSpec>(BinSpec::sigmoid(target_bins())) : std::nullopt;
    model_.zero_grad();
    double loss = 0.0, dig = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
      tape_.clear();
      auto sl = sample_loss(tape_, model_, s, dbins, config_.digital_weight);
      tape_.backpropagate(tape_.scale_shift(sl.total, scale, 0.0));
      loss += sl.total.value() * scale;
      dig += sl.digital * scale;
      recent_.push_back(sl.correct);
      if (recent_.size() > config_.promotion_window) recent_.pop_front();
    }
    optimizer_.step();
    ++step_;
    last_loss_ = loss;
    last_digital_ = dig;
    maybe_promote();
    return loss;
  }

  double rolling_accuracy() const {
    if (recent_.empty()) return 0.0;
    return static_cast<double>(std::count(recent_.begin(), recent_.end(), true)) /
           static_cast<double>(recent_.size());
  }

  double validation_accuracy(const std::optional<BinSpec>& bins = std::nullopt) const {
    return accuracy(model_, validation_, bins);
  }

  std::span<const tasks::TaskSample> validation_set() const { return validation_; }

  int target_bins() const { return target_bin_count(found_bins_, config_.max_target_bins); }

  TrainResult run() {
    TrainResult result;
    bool done = false;
    while (step_ < config_.max_steps && !done) {
      step();
      if (step_ % config_.eval_interval != 0) continue;
      TrainLogEntry e{step_, curriculum_max_, last_loss_, last_digital_, 0.0};
      e.validation_accuracy = validation_accuracy();
      // The digital loss targets min(N_b, max_target_bins) bins, N_b from
      // a bin search on the current model.
      const auto search = find_bin_count(model_, validation_, e.validation_accuracy, config_.max_target_bins);
      found_bins_ = search.count;
      e.target_bins = target_bins();
      result.log.push_back(e);
      if (sink_) sink_(e);
      done = curriculum_max_ >= config_.train_max_len && e.validation_accuracy >= 1.0 && search.found();
    }
    result.steps = step_;
    result.validation_accuracy = validation_accuracy();
    result.bin_search = find_bin_count(model_, validation_, result.validation_accuracy, config_.bin_search_cap);
    result.converged = done;
    result.report = evaluate(model_, config_.task, config_.test_lengths, config_.test_count,
                             config_.seed + 1000, std::nullopt);
    if (result.bin_search.found()) {
      auto binned = evaluate(model_, config_.task, config_.test_lengths, config_.test_count,
                             config_.seed + 1000, BinSpec::sigmoid(*result.bin_search.count));
      result.report.rows.insert(result.report.rows.end(), binned.rows.begin(), binned.rows.end());
    }
    result.model = model_;
    return result;
  }

 private:
  void maybe_promote() {
    if (curriculum_max_ >= config_.train_max_len) return;
    if (recent_.size() < config_.promotion_window) return;
    if (rolling_accuracy() < config_.promotion_threshold) return;
    curriculum_max_ = std::min(config_.train_max_len, curriculum_max_ + config_.curriculum_step);
    recent_.clear();
  }

  TrainConfig config_;
  LogSink sink_;
  LdmModel model_;
  Adam optimizer_;
  std::mt19937_64 rng_;
  diff::Tape tape_;
  std::vector<tasks::TaskSample> validation_;
  std::deque<bool> recent_;
  std::optional<int> found_bins_;
  std::size_t curriculum_max_ = 0;
  std::size_t step_ = 0;
  double last_loss_ = 0.0;
  double last_digital_ = 0.0;
};

inline TrainResult train_run(const TrainConfig& config, Trainer::LogSink sink = {}) {
  Trainer trainer(config, std::move(sink));
  return trainer.run();
}

}  // namespace ldm
