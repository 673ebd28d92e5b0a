// Versioned text checkpoints: configuration snapshot, architecture, training
// state and weights at 17 significant digits.

#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ldm/config.hpp"
#include "ldm/model.hpp"

namespace ldm {

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "ldm-checkpoint";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  config::ExperimentConfig config;
  LdmModel model;
  std::size_t step = 0;
  std::uint64_t seed = 0;
  std::optional<int> bin_count;  // result of the last bin search, if any
};

inline std::string serialize(const Checkpoint& ck) {
  std::ostringstream out;
  const auto& a = ck.model.arch();
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "[config]\n" << config::dump(ck.config) << "[end config]\n";
  out << "input_dim " << a.input_dim << '\n'
      << "hidden_units " << a.hidden_units << '\n'
      << "state_count " << a.state_count << '\n'
      << "mem_size " << a.mem_size << '\n'
      << "step " << ck.step << '\n'
      << "seed " << ck.seed << '\n'
      << "bin_count " << ck.bin_count.value_or(0) << '\n';
  for (const auto* p : ck.model.parameters()) {
    out << "param " << p->name << ' ' << p->rows << ' ' << p->cols << '\n';
    for (std::size_t i = 0; i < p->size(); ++i)
      out << config::format_double(p->value[i]) << (i + 1 == p->size() || (i + 1) % 8 == 0 ? '\n' : ' ');
  }
  out << "end\n";
  return out.str();
}

inline Checkpoint deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic)
    throw CheckpointError("not an ldm checkpoint (missing '" + std::string(kCheckpointMagic) + "' header)");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  auto fail = [&](const std::string& what) {
    return CheckpointError("corrupt checkpoint (version " + std::to_string(version) + "): " + what);
  };

  std::string line;
  std::getline(in, line);
  if (!std::getline(in, line) || line != "[config]") throw fail("missing [config] block");
  std::string cfg;
  while (std::getline(in, line) && line != "[end config]") cfg += line + '\n';
  if (line != "[end config]") throw fail("unterminated [config] block");

  Checkpoint ck;
  try {
    ck.config = config::parse(cfg);
  } catch (const config::ConfigError& e) {
    throw fail(std::string("config: ") + e.what());
  }

  auto expect = [&](const char* key) {
    std::string k;
    std::uint64_t v = 0;
    if (!(in >> k >> v) || k != key) throw fail(std::string("expected '") + key + "'");
    return v;
  };
  Architecture a;
  a.input_dim = expect("input_dim");
  a.hidden_units = expect("hidden_units");
  a.state_count = expect("state_count");
  a.mem_size = expect("mem_size");
  ck.step = expect("step");
  ck.seed = expect("seed");
  const auto bins = expect("bin_count");
  if (bins >= 2) ck.bin_count = static_cast<int>(bins);

  try {
    ck.model = LdmModel(a);
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  for (auto* p : ck.model.parameters()) {
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "param" || name != p->name || rows != p->rows ||
        cols != p->cols)
      throw fail("parameter block for '" + p->name + "' does not match the architecture");
    for (auto& v : p->value) {
      std::string tok;
      if (!(in >> tok)) throw fail("truncated weights in '" + p->name + "'");
      try {
        v = config::parse_double(tok);
      } catch (const config::ConfigError&) {
        throw fail("bad weight '" + tok + "' in '" + p->name + "'");
      }
    }
  }
  std::string end;
  if (!(in >> end) || end != "end") throw fail("missing end marker");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << serialize(ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace ldm
