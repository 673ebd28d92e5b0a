// Experiment configuration: flat `key = value` text grouped in [sections].

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ldm/analysis.hpp"
#include "ldm/train.hpp"

namespace ldm::config {

/// Raised for unreadable or invalid configuration text.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  TrainConfig train;
  bool binned = true;
  std::vector<std::size_t> count_lengths = {50, 100, 200};
  std::size_t count_initial_samples = 2;
  std::size_t count_max_samples = std::size_t{1} << 18;
  std::string checkpoint_dir = "runs";
  std::string log_dir = "runs";
  std::string data_path = "data.tsv";

  analysis::CountOptions count_options() const {
    return {count_initial_samples, count_max_samples, train.seed};
  }
};

// ---- value formatting -----------------------------------------------------

/// 17 significant digits: enough for an exact double round trip.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw ConfigError("not a nonnegative integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(parse_uint(trim(item))));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

inline std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// ---- field table ----------------------------------------------------------

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

namespace detail {

template <class T>
Field size_field(std::string section, std::string key, T ExperimentConfig::*outer, std::size_t T::*member) {
  return {section, key, [=](const ExperimentConfig& c) { return std::to_string(c.*outer.*member); },
          [=](ExperimentConfig& c, const std::string& v) { c.*outer.*member = parse_uint(v); }};
}

}  // namespace detail

/// Every configuration key, in canonical dump order.
inline const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto sz = [&](const char* sec, const char* key, std::size_t TrainConfig::*m) {
      f.push_back(detail::size_field<TrainConfig>(sec, key, &C::train, m));
    };
    auto dbl = [&](const char* sec, const char* key, auto getter) {
      f.push_back({sec, key, [=](const C& c) { return format_double(getter(const_cast<C&>(c))); },
                   [=](C& c, const std::string& v) { getter(c) = parse_double(v); }});
    };

    f.push_back({"task", "name", [](const C& c) { return std::string(tasks::name(c.train.task)); },
                 [](C& c, const std::string& v) {
                   auto t = tasks::parse_task(v);
                   if (!t) throw ConfigError("unknown task '" + v + "' (copy, sum, adversarial_sum, dyck)");
                   c.train.task = *t;
                 }});
    sz("task", "train_min_len", &TrainConfig::train_min_len);
    sz("task", "train_max_len", &TrainConfig::train_max_len);
    sz("task", "validation_len", &TrainConfig::validation_len);
    f.push_back({"task", "test_lengths", [](const C& c) { return format_size_list(c.train.test_lengths); },
                 [](C& c, const std::string& v) { c.train.test_lengths = parse_size_list(v); }});

    sz("model", "hidden_units", &TrainConfig::hidden_units);
    sz("model", "state_count", &TrainConfig::state_count);
    sz("model", "mem_size", &TrainConfig::mem_size);

    sz("optimizer", "batch_size", &TrainConfig::batch_size);
    sz("optimizer", "max_steps", &TrainConfig::max_steps);
    dbl("optimizer", "learning_rate", [](C& c) -> double& { return c.train.adam.learning_rate; });
    dbl("optimizer", "beta1", [](C& c) -> double& { return c.train.adam.beta1; });
    dbl("optimizer", "beta2", [](C& c) -> double& { return c.train.adam.beta2; });
    dbl("optimizer", "epsilon", [](C& c) -> double& { return c.train.adam.epsilon; });
    dbl("optimizer", "clip_norm", [](C& c) -> double& { return c.train.adam.clip_norm; });

    sz("curriculum", "step", &TrainConfig::curriculum_step);
    dbl("curriculum", "promotion_threshold", [](C& c) -> double& { return c.train.promotion_threshold; });
    sz("curriculum", "promotion_window", &TrainConfig::promotion_window);

    f.push_back({"discretize", "binned", [](const C& c) { return std::string(c.binned ? "true" : "false"); },
                 [](C& c, const std::string& v) { c.binned = parse_bool(v); }});
    f.push_back({"discretize", "digital_loss",
                 [](const C& c) { return std::string(c.train.digital_loss ? "true" : "false"); },
                 [](C& c, const std::string& v) { c.train.digital_loss = parse_bool(v); }});
    dbl("discretize", "digital_weight", [](C& c) -> double& { return c.train.digital_weight; });
    sz("discretize", "digital_start_step", &TrainConfig::digital_start_step);
    f.push_back({"discretize", "max_target_bins",
                 [](const C& c) { return std::to_string(c.train.max_target_bins); },
                 [](C& c, const std::string& v) { c.train.max_target_bins = static_cast<int>(parse_uint(v)); }});
    f.push_back({"discretize", "bin_search_cap", [](const C& c) { return std::to_string(c.train.bin_search_cap); },
                 [](C& c, const std::string& v) { c.train.bin_search_cap = static_cast<int>(parse_uint(v)); }});

    sz("eval", "eval_interval", &TrainConfig::eval_interval);
    sz("eval", "validation_count", &TrainConfig::validation_count);
    sz("eval", "test_count", &TrainConfig::test_count);

    f.push_back({"analysis", "count_lengths", [](const C& c) { return format_size_list(c.count_lengths); },
                 [](C& c, const std::string& v) { c.count_lengths = parse_size_list(v); }});
    f.push_back({"analysis", "initial_samples", [](const C& c) { return std::to_string(c.count_initial_samples); },
                 [](C& c, const std::string& v) { c.count_initial_samples = parse_uint(v); }});
    f.push_back({"analysis", "max_samples", [](const C& c) { return std::to_string(c.count_max_samples); },
                 [](C& c, const std::string& v) { c.count_max_samples = parse_uint(v); }});

    f.push_back({"run", "seed", [](const C& c) { return std::to_string(c.train.seed); },
                 [](C& c, const std::string& v) { c.train.seed = parse_uint(v); }});

    auto path = [&](const char* key, std::string C::*m) {
      f.push_back({"paths", key, [=](const C& c) { return c.*m; },
                   [=](C& c, const std::string& v) { c.*m = v; }});
    };
    path("checkpoint_dir", &C::checkpoint_dir);
    path("log_dir", &C::log_dir);
    path("data_path", &C::data_path);
    return f;
  }();
  return table;
}

/// Canonical text form; parse(dump(c)) == c for every field.
inline std::string dump(const ExperimentConfig& c) {
  std::string out = "# ldm experiment configuration\n";
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

/// Reads `[section]` headers and `key = value` lines; `#` starts a comment.
/// Keys absent from the text keep their defaults; unknown keys are errors.
inline ExperimentConfig parse(std::istream& in) {
  ExperimentConfig c;
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.section + "." + f.key] = &f;

  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto where = "line " + std::to_string(number) + ": ";
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = index.find(section + "." + key);
    if (it == index.end()) throw ConfigError(where + "unknown key '" + section + "." + key + "'");
    try {
      it->second->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

inline ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

}  // namespace ldm::config
