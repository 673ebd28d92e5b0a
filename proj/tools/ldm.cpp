// ldm: train, evaluate and analyze localized-differentiable-memory networks.

#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ldm/cli.hpp"

namespace {

std::vector<std::size_t> parse_lengths(const std::string& csv) {
  try {
    return ldm::config::parse_size_list(csv);
  } catch (const ldm::config::ConfigError& e) {
    throw CLI::ValidationError("--lengths", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized differentiable memory networks for algorithmic tasks"};
  app.require_subcommand(1);

  ldm::cli::Options opts;
  std::string lengths_csv;
  std::size_t count = 0, min_len = 0, max_len = 0;
  std::uint64_t seed = 0;
  int cap = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Experiment configuration file");
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_flag("--dry-run", opts.dry_run, "Validate inputs and print the resolved settings");
    sub->add_option("--out", opts.out, "Output path");
  };

  auto* train = app.add_subcommand("train", "Train a model with curriculum and digital loss");
  common(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint at the given lengths");
  common(eval);
  eval->add_option("--checkpoint", opts.checkpoint_path, "Checkpoint file")->required();
  eval->add_flag("--binned", opts.binned, "Bin activations during inference");
  eval->add_option("--lengths", lengths_csv, "Comma-separated sequence lengths");
  eval->add_option("--count", count, "Samples per length");
  eval->add_option("--task", opts.task, "Task to evaluate on (defaults to the trained task)");
  eval->add_option("--cap", cap, "Bin search cap");

  auto* bins = app.add_subcommand("bin-search", "Find the smallest bin count preserving validation accuracy");
  common(bins);
  bins->add_option("--checkpoint", opts.checkpoint_path, "Checkpoint file")->required();
  bins->add_option("--cap", cap, "Largest bin count to try");

  auto* states = app.add_subcommand("count-states", "Count distinct binned computational states per length");
  common(states);
  states->add_option("--checkpoint", opts.checkpoint_path, "Checkpoint file")->required();
  states->add_option("--lengths", lengths_csv, "Comma-separated sequence lengths");

  auto* gen = app.add_subcommand("gen-data", "Export a generated dataset as tab-separated text");
  common(gen);
  gen->add_option("--task", opts.task, "copy, sum, adversarial_sum or dyck");
  gen->add_option("--count", count, "Number of samples");
  gen->add_option("--min-len", min_len, "Shortest sequence");
  gen->add_option("--max-len", max_len, "Longest sequence");

  auto* grad = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  common(grad);
  grad->add_option("--task", opts.task, "Task providing the sample");
  grad->add_option("--lengths", lengths_csv, "Sample length (first entry)");

  auto* defaults = app.add_subcommand("dump-defaults", "Print the default configuration");
  defaults->add_option("--out", opts.out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ldm::cli::kUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      auto given = [&](const char* name) {
        const auto* opt = sub->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
      };
      if (given("--seed")) opts.seed = seed;
      if (given("--count")) opts.count = count;
      if (given("--min-len")) opts.min_len = min_len;
      if (given("--max-len")) opts.max_len = max_len;
      if (given("--cap")) opts.cap = cap;
      if (given("--lengths")) opts.lengths = parse_lengths(lengths_csv);
    }
    if (*train) return ldm::cli::cmd_train(opts, std::cout, std::cerr);
    if (*eval) return ldm::cli::cmd_eval(opts, std::cout, std::cerr);
    if (*bins) return ldm::cli::cmd_bin_search(opts, std::cout, std::cerr);
    if (*states) return ldm::cli::cmd_count_states(opts, std::cout, std::cerr);
    if (*gen) return ldm::cli::cmd_gen_data(opts, std::cout, std::cerr);
    if (*grad) return ldm::cli::cmd_grad_check(opts, std::cout, std::cerr);
    if (*defaults) return ldm::cli::cmd_dump_defaults(opts, std::cout);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ldm::cli::kUsage;
  } catch (const ldm::config::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ldm::cli::kUsage;
  } catch (const ldm::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ldm::cli::kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ldm::cli::kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ldm::cli::kData;
  }
  return ldm::cli::kUsage;
}
