// Subcommand implementations behind the `ldm` executable. Each command
// writes human-readable progress to `out`, diagnostics to `err`, and returns
// the process exit code.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ldm/analysis.hpp"
#include "ldm/checkpoint.hpp"
#include "ldm/config.hpp"
#include "ldm/gradcheck.hpp"
#include "ldm/tasks.hpp"
#include "ldm/train.hpp"

namespace ldm::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

/// Union of the flags every subcommand understands.
struct Options {
  std::string config_path;
  std::string checkpoint_path;
  std::optional<std::uint64_t> seed;
  bool binned = false;
  std::optional<std::vector<std::size_t>> lengths;
  std::string out;
  bool dry_run = false;
  std::optional<std::string> task;
  std::optional<std::size_t> count;
  std::optional<std::size_t> min_len;
  std::optional<std::size_t> max_len;
  std::optional<int> cap;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Defaults, overlaid by the config file, overlaid by --seed.
inline config::ExperimentConfig resolve_config(const Options& o) {
  config::ExperimentConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw config::ConfigError("cannot read config file '" + o.config_path + "'");
    c = config::parse(in);
  }
  if (o.seed) c.train.seed = *o.seed;
  return c;
}

inline tasks::Task resolve_task(const Options& o, tasks::Task fallback) {
  if (!o.task) return fallback;
  auto t = tasks::parse_task(*o.task);
  if (!t) throw config::ConfigError("unknown task '" + *o.task + "'; valid tasks: copy, sum, adversarial_sum, dyck");
  return *t;
}

inline std::string eval_csv(const EvalReport& report) {
  std::string csv = "length,accuracy,binned,n_b\n";
  for (const auto& r : report.rows) {
    csv += std::to_string(r.length) + "," + (r.error.empty() ? fixed6(r.accuracy) : "error:" + r.error) + "," +
           (r.binned ? "true" : "false") + "," + std::to_string(r.bin_count) + "\n";
  }
  return csv;
}

inline std::string log_line(const TrainLogEntry& e) {
  return std::to_string(e.step) + "\t" + std::to_string(e.curriculum_max) + "\t" + fixed6(e.train_loss) + "\t" +
         fixed6(e.digital_loss) + "\t" + fixed6(e.validation_accuracy) + "\t" +
         std::to_string(e.target_bins);
}

// ---- subcommands ----------------------------------------------------------

inline int cmd_dump_defaults(const Options& o, std::ostream& out) {
  const auto text = config::dump(config::ExperimentConfig{});
  if (o.out.empty())
    out << text;
  else
    write_file(o.out, text);
  return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  auto cfg = resolve_config(o);
  const std::string dir = o.out.empty() ? cfg.checkpoint_dir : o.out;
  const std::string log_dir = o.out.empty() ? cfg.log_dir : o.out;
  if (o.dry_run) {
    out << config::dump(cfg) << "# checkpoint -> " << dir << "/checkpoint.txt\n"
        << "# log -> " << log_dir << "/train.log\n";
    return kOk;
  }
  std::filesystem::create_directories(dir);
  std::filesystem::create_directories(log_dir);
  std::ofstream log(log_dir + "/train.log", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write '" + log_dir + "/train.log'");
  const std::string header = "step\tcurriculum_max\ttrain_loss\tdigital_loss\tvalidation_accuracy\ttarget_bins";
  out << header << "\n";
  log << header << "\n";
  auto result = train_run(cfg.train, [&](const TrainLogEntry& e) {
    const auto line = log_line(e);
    out << line << "\n" << std::flush;
    log << line << "\n" << std::flush;
  });

  Checkpoint ck;
  ck.config = cfg;
  ck.model = result.model;
  ck.step = result.steps;
  ck.seed = cfg.train.seed;
  ck.bin_count = result.bin_search.count;
  save_checkpoint(ck, dir + "/checkpoint.txt");
  write_file(dir + "/eval.csv", eval_csv(result.report));

  if (result.converged) {
    out << "converged after " << result.steps << " steps; N_b = " << *result.bin_search.count << "\n";
  } else {
    err << "did not converge within " << result.steps << " steps (validation accuracy "
        << fixed6(result.validation_accuracy) << ", bin search "
        << (result.bin_search.found() ? "N_b = " + std::to_string(*result.bin_search.count)
                                      : "exceeded cap; requires digital loss")
        << ")\n";
  }
  return kOk;
}

/// Bin count stored in the checkpoint, or a fresh search on its validation set.
inline BinSearchResult bins_for(const Checkpoint& ck, int cap) {
  if (ck.bin_count) {
    BinSearchResult r;
    r.count = ck.bin_count;
    return r;
  }
  const auto val = validation_samples(ck.config.train);
  const double unbinned = accuracy(ck.model, val);
  return find_bin_count(ck.model, val, unbinned, cap);
}

inline int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  auto ck = load_checkpoint(o.checkpoint_path);
  if (o.seed) ck.config.train.seed = *o.seed;
  const auto task = resolve_task(o, ck.config.train.task);
  const auto lengths = o.lengths.value_or(ck.config.train.test_lengths);
  const auto count = o.count.value_or(ck.config.train.test_count);
  if (o.dry_run) {
    out << "checkpoint = " << o.checkpoint_path << "\ntask = " << tasks::name(task)
        << "\nlengths = " << config::format_size_list(lengths) << "\ncount = " << count
        << "\nbinned = " << (o.binned ? "true" : "false") << "\n";
    return kOk;
  }
  std::optional<BinSpec> bins;
  if (o.binned) {
    const auto search = bins_for(ck, o.cap.value_or(ck.config.train.bin_search_cap));
    if (search.found())
      bins = BinSpec::sigmoid(*search.count);
    else
      err << "no bin count up to the cap preserves validation accuracy (requires digital loss); "
             "evaluating unbinned\n";
  }
  const auto report = evaluate(ck.model, task, lengths, count, ck.config.train.seed + 1000, bins);
  const auto csv = eval_csv(report);
  if (o.out.empty())
    out << csv;
  else
    write_file(o.out, csv);
  return kOk;
}

inline int cmd_bin_search(const Options& o, std::ostream& out, std::ostream& /*err*/) {
  auto ck = load_checkpoint(o.checkpoint_path);
  const int cap = o.cap.value_or(ck.config.train.bin_search_cap);
  if (o.dry_run) {
    out << "checkpoint = " << o.checkpoint_path << "\ncap = " << cap << "\n";
    return kOk;
  }
  const auto val = validation_samples(ck.config.train);
  const double unbinned = accuracy(ck.model, val);
  const auto search = find_bin_count(ck.model, val, unbinned, cap);
  std::string csv = "n_b,binned_accuracy,unbinned_accuracy\n";
  for (std::size_t i = 0; i < search.accuracies.size(); ++i)
    csv += std::to_string(i + 2) + "," + fixed6(search.accuracies[i]) + "," + fixed6(unbinned) + "\n";
  if (o.out.empty())
    out << csv;
  else
    write_file(o.out, csv);
  if (search.found())
    out << "N_b = " << *search.count << "\n";
  else
    out << "no bin count <= " << cap << " reaches the unbinned accuracy; requires digital loss\n";
  return kOk;
}

inline int cmd_count_states(const Options& o, std::ostream& out, std::ostream& err) {
  auto ck = load_checkpoint(o.checkpoint_path);
  if (o.seed) ck.config.train.seed = *o.seed;
  const auto lengths = o.lengths.value_or(ck.config.count_lengths);
  const std::string dir = o.out.empty() ? ck.config.log_dir : o.out;
  if (o.dry_run) {
    out << "checkpoint = " << o.checkpoint_path << "\nlengths = " << config::format_size_list(lengths)
        << "\nout = " << dir << "/states.csv, " << dir << "/fit.csv\n";
    return kOk;
  }
  const auto search = bins_for(ck, ck.config.train.bin_search_cap);
  const int nb = search.count.value_or(ck.config.train.max_target_bins);
  if (!search.found()) err << "bin search failed; counting with " << nb << " bins\n";
  const auto spec = BinSpec::sigmoid(nb);

  analysis::StateCountCurve curve;
  std::string states = "length,plateau_count,samples_used,plateaued\n";
  for (auto len : lengths) {
    const auto p = analysis::count_states(ck.model, spec, ck.config.train.task, len, ck.config.count_options());
    curve.points.push_back(p);
    states += std::to_string(p.length) + "," + std::to_string(p.count) + "," + std::to_string(p.samples_used) +
              "," + (p.plateaued ? "true" : "false") + "\n";
  }
  std::string fit = "a,b,r2,status\n";
  if (curve.points.size() >= 3) {
    std::vector<double> xs, ys;
    for (const auto& p : curve.points) {
      xs.push_back(static_cast<double>(p.length));
      ys.push_back(static_cast<double>(p.count));
    }
    const auto f = analysis::fit_exponential(xs, ys);
    curve.fit = f;
    fit += f.degenerate ? config::format_double(f.a) + ",0,,degenerate\n"
                        : config::format_double(f.a) + "," + config::format_double(f.b) + "," +
                              config::format_double(f.r2) + ",fit\n";
  } else {
    fit += ",,,skipped: fewer than 3 lengths\n";
    out << "fit skipped: fewer than 3 lengths\n";
  }
  write_file(dir + "/states.csv", states);
  write_file(dir + "/fit.csv", fit);
  out << states;
  return kOk;
}

/// One line per sample: task, length, input digits, target digits or label.
/// Two-dimensional inputs are written as the two operand strings joined by
/// ':'. Dyck targets are the label (1 valid, 0 invalid).
inline std::string format_sample(const tasks::TaskSample& s) {
  auto digit = [](double v) { return static_cast<char>('0' + static_cast<int>(v)); };
  std::string input, target;
  if (s.dim == 2) {
    std::string a, b;
    for (std::size_t i = 0; i < s.length; ++i) {
      a += digit(s.input[2 * i]);
      b += digit(s.input[2 * i + 1]);
    }
    input = a + ":" + b;
  } else {
    for (double v : s.input) input += digit(v);
  }
  if (auto label = s.label())
    target = std::to_string(*label);
  else
    for (double v : s.target) target += digit(v);
  return std::string(tasks::name(s.task)) + "\t" + std::to_string(s.length) + "\t" + input + "\t" + target;
}

inline int cmd_gen_data(const Options& o, std::ostream& out, std::ostream& /*err*/) {
  const auto cfg = resolve_config(o);
  const auto task = resolve_task(o, cfg.train.task);
  const tasks::LengthRange range(o.min_len.value_or(cfg.train.train_min_len),
                                 o.max_len.value_or(cfg.train.train_max_len));
  const auto count = o.count.value_or(cfg.train.validation_count);
  const std::string path = o.out.empty() ? cfg.data_path : o.out;
  if (o.dry_run) {
    out << "task = " << tasks::name(task) << "\nrange = " << range.min_len << "-" << range.max_len
        << "\ncount = " << count << "\nseed = " << cfg.train.seed << "\nout = " << path << "\n";
    return kOk;
  }
  std::string text;
  for (const auto& s : tasks::generate(task, range, count, cfg.train.seed)) text += format_sample(s) + "\n";
  write_file(path, text);
  out << "wrote " << count << " samples to " << path << "\n";
  return kOk;
}

inline int cmd_grad_check(const Options& o, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(o);
  const auto task = resolve_task(o, cfg.train.task);
  const std::size_t len = o.lengths ? o.lengths->front() : 8;
  if (o.dry_run) {
    out << "task = " << tasks::name(task) << "\nlength = " << len << "\nseed = " << cfg.train.seed << "\n";
    return kOk;
  }
  auto t = cfg.train;
  t.task = task;
  auto arch = t.architecture();
  LdmModel model(arch);
  model.initialize(t.seed);
  const auto sample = tasks::generate(task, tasks::LengthRange::exactly(len), 1, t.seed)[0];
  const std::optional<BinSpec> dbins =
      t.digital_loss ? std::optional<BinSpec>(BinSpec::sigmoid(t.max_target_bins)) : std::nullopt;

  double nearest = 1.0;
  {
    diff::Tape tape;
    const auto run = unroll(tape, model, sample.input, sample.iterations);
    for (auto p : run.read_positions) nearest = std::min(nearest, std::fabs(p - std::round(p)));
    for (auto p : run.write_positions) nearest = std::min(nearest, std::fabs(p - std::round(p)));
  }
  if (nearest < 1e-6) err << "warning: a head position lies within 1e-6 of an integer\n";

  const auto params = model.parameters();
  const auto report = diff::finite_difference_check(
      params,
      [&](diff::Tape& tape) { return sample_loss(tape, model, sample, dbins, t.digital_weight).total; }, 1e-5,
      1e-4);
  out << "parameters_checked = " << report.checked << "\nmax_rel_error = " << config::format_double(report.max_rel_error)
      << "\nmax_abs_error = " << config::format_double(report.max_abs_error) << "\nflagged = " << report.flagged.size()
      << "\n";
  for (const auto& f : report.flagged)
    err << f.parameter << "[" << f.index << "]: analytic " << f.analytic << " numeric " << f.numeric << "\n";
  return report.passed() ? kOk : kData;
}

}  // namespace ldm::cli
