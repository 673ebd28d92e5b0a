// Algorithmic task generators (copy, binary sum, adversarial sum, Dyck
// parsing) and the brute-force oracles that define their targets.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ldm::tasks {

enum class Task { copy, sum, adversarial_sum, dyck };

inline constexpr std::string_view task_names[] = {"copy", "sum", "adversarial_sum", "dyck"};

inline std::string_view name(Task t) { return task_names[static_cast<int>(t)]; }

inline std::optional<Task> parse_task(std::string_view s) {
  for (int i = 0; i < 4; ++i)
    if (task_names[i] == s) return static_cast<Task>(i);
  return std::nullopt;
}

inline std::size_t input_dim(Task t) { return t == Task::sum || t == Task::adversarial_sum ? 2 : 1; }

inline bool is_classification(Task t) { return t == Task::dyck; }

struct LengthRange {
  std::size_t min_len = 8;
  std::size_t max_len = 20;

  LengthRange() = default;
  LengthRange(std::size_t lo, std::size_t hi) : min_len(lo), max_len(hi) {
    if (lo < 1 || lo > hi) throw std::invalid_argument("LengthRange: need 1 <= min_len <= max_len");
  }
  static LengthRange exactly(std::size_t len) { return {len, len}; }
};

using Bits = std::vector<int>;

/// One example. `input` is row-major (rows x dim); the unroll feeds -1 for
/// iterations past the last row. `target` and `mask` have one entry per
/// iteration.
struct TaskSample {
  Task task = Task::copy;
  std::size_t length = 0;  // l
  std::size_t dim = 1;     // d
  std::vector<double> input;
  std::size_t iterations = 0;  // I
  std::vector<double> target;
  std::vector<std::uint8_t> mask;
  std::string variant;  // generator detail, e.g. "valid", "flip", "blocks=2"

  std::size_t rows() const { return input.size() / dim; }

  /// Classification label (final target) for Dyck samples.
  std::optional<int> label() const {
    if (!is_classification(task)) return std::nullopt;
    return static_cast<int>(target.back());
  }

  std::size_t masked_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  }
};

// ---- oracles --------------------------------------------------------------

/// Counter scan: '(' = 0 adds one, ')' = 1 subtracts one.
inline bool dyck_oracle(const Bits& bits) {
  long depth = 0;
  for (int b : bits) {
    depth += b == 0 ? 1 : -1;
    if (depth < 0) return false;
  }
  return depth == 0;
}

/// LSB-first sum of two equally long operands; result has one extra bit.
inline Bits add_bits(const Bits& a, const Bits& b) {
  if (a.size() != b.size()) throw std::invalid_argument("add_bits: operand lengths differ");
  Bits out(a.size() + 1, 0);
  int carry = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int s = a[i] + b[i] + carry;
    out[i] = s & 1;
    carry = s >> 1;
  }
  out[a.size()] = carry;
  return out;
}

/// Longest run of consecutive positions producing a carry.
inline std::size_t longest_carry_chain(const Bits& a, const Bits& b) {
  std::size_t best = 0, run = 0;
  int carry = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    carry = (a[i] + b[i] + carry) >> 1;
    run = carry ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

// ---- sample builders ------------------------------------------------------

inline TaskSample make_copy(const Bits& bits) {
  const auto l = bits.size();
  TaskSample s;
  s.task = Task::copy;
  s.length = l;
  s.dim = 1;
  s.input.assign(bits.begin(), bits.end());
  s.iterations = 2 * l;
  s.target.assign(2 * l, 0.0);
  s.mask.assign(2 * l, 0);
  for (std::size_t i = 0; i < l; ++i) {
    s.target[l + i] = bits[i];
    s.mask[l + i] = 1;
  }
  return s;
}

inline TaskSample make_sum(const Bits& a, const Bits& b, Task task = Task::sum) {
  const auto l = a.size();
  const Bits total = add_bits(a, b);
  TaskSample s;
  s.task = task;
  s.length = l;
  s.dim = 2;
  s.input.reserve(2 * (l + 1));
  for (std::size_t i = 0; i < l; ++i) {
    s.input.push_back(a[i]);
    s.input.push_back(b[i]);
  }
  s.input.push_back(0.0);
  s.input.push_back(0.0);
  s.iterations = l + 1;
  s.target.assign(total.begin(), total.end());
  s.mask.assign(l + 1, 1);
  return s;
}

inline TaskSample make_dyck(const Bits& bits) {
  const auto l = bits.size();
  TaskSample s;
  s.task = Task::dyck;
  s.length = l;
  s.dim = 1;
  s.input.assign(bits.begin(), bits.end());
  s.iterations = l;
  s.target.assign(l, 0.0);
  s.mask.assign(l, 0);
  if (l > 0) {
    s.target[l - 1] = dyck_oracle(bits) ? 1.0 : 0.0;
    s.mask[l - 1] = 1;
  }
  return s;
}

/// Target recomputed from the input alone with the brute-force oracles.
inline std::vector<double> oracle_target(const TaskSample& s) {
  switch (s.task) {
    case Task::copy:
      return make_copy(Bits(s.input.begin(), s.input.end())).target;
    case Task::sum:
    case Task::adversarial_sum: {
      Bits a, b;
      for (std::size_t i = 0; i < s.length; ++i) {
        a.push_back(static_cast<int>(s.input[2 * i]));
        b.push_back(static_cast<int>(s.input[2 * i + 1]));
      }
      const Bits t = add_bits(a, b);
      return {t.begin(), t.end()};
    }
    case Task::dyck:
      return make_dyck(Bits(s.input.begin(), s.input.end())).target;
  }
  return {};
}

// ---- generators -----------------------------------------------------------

namespace detail {

inline std::size_t draw_length(std::mt19937_64& rng, const LengthRange& range) {
  return std::uniform_int_distribution<std::size_t>(range.min_len, range.max_len)(rng);
}

/// Even lengths only; a range without one falls back to the next even value.
inline std::size_t draw_even_length(std::mt19937_64& rng, const LengthRange& range) {
  const std::size_t lo = (range.min_len + 1) / 2, hi = range.max_len / 2;
  if (lo > hi) return 2 * lo;
  return 2 * std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Bits random_bits(std::mt19937_64& rng, std::size_t n) {
  std::bernoulli_distribution coin(0.5);
  Bits out(n);
  for (auto& b : out) b = coin(rng) ? 1 : 0;
  return out;
}

}  // namespace detail

/// Uniformly random balanced word of even length `len` via the cycle lemma:
/// among rotations of a shuffled word with one surplus ')', exactly one
/// keeps every proper prefix nonnegative.
inline Bits random_dyck_word(std::mt19937_64& rng, std::size_t len) {
  if (len % 2) throw std::invalid_argument("random_dyck_word: odd length");
  const std::size_t half = len / 2;
  Bits w(half, 0);
  w.insert(w.end(), half + 1, 1);
  std::shuffle(w.begin(), w.end(), rng);
  long depth = 0, lowest = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    depth += w[i] == 0 ? 1 : -1;
    if (depth < lowest) {
      lowest = depth;
      start = i + 1;
    }
  }
  std::rotate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(start % w.size()), w.end());
  w.pop_back();
  return w;
}

inline std::vector<TaskSample> gen_copy(const LengthRange& range, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TaskSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(make_copy(detail::random_bits(rng, detail::draw_length(rng, range))));
  return out;
}

inline std::vector<TaskSample> gen_binary_sum(const LengthRange& range, std::size_t count,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TaskSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto l = detail::draw_length(rng, range);
    const Bits a = detail::random_bits(rng, l);
    const Bits b = detail::random_bits(rng, l);
    out.push_back(make_sum(a, b));
  }
  return out;
}

/// Operand A is a few maximal runs of ones; B has a single one at the low end
/// of each run, so each run becomes a carry chain. The first run covers at
/// least half the positions; 1-3 runs per sample, recorded in `variant`.
inline std::vector<TaskSample> gen_adversarial_sum(const LengthRange& range, std::size_t count,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TaskSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto l = detail::draw_length(rng, range);
    Bits a(l, 0), b(l, 0);
    auto place = [&](std::size_t begin, std::size_t len) {
      for (std::size_t k = begin; k < begin + len; ++k) a[k] = 1;
      b[begin] = 1;
    };
    const std::size_t longest = std::uniform_int_distribution<std::size_t>((l + 1) / 2, l)(rng);
    const std::size_t first = std::uniform_int_distribution<std::size_t>(0, l - longest)(rng);
    place(first, longest);

    // Free gaps keep one zero between runs so every run stays maximal.
    struct Gap {
      std::size_t begin, len;
    };
    std::vector<Gap> gaps;
    if (first >= 2) gaps.push_back({0, first - 1});
    if (first + longest + 1 < l) gaps.push_back({first + longest + 1, l - first - longest - 1});

    const int wanted = std::uniform_int_distribution<int>(1, 3)(rng);
    int blocks = 1;
    while (blocks < wanted && !gaps.empty()) {
      const auto gi = std::uniform_int_distribution<std::size_t>(0, gaps.size() - 1)(rng);
      const Gap g = gaps[gi];
      gaps.erase(gaps.begin() + static_cast<std::ptrdiff_t>(gi));
      const auto len = std::uniform_int_distribution<std::size_t>(1, g.len)(rng);
      const auto begin = std::uniform_int_distribution<std::size_t>(g.begin, g.begin + g.len - len)(rng);
      place(begin, len);
      ++blocks;
      if (begin >= g.begin + 2) gaps.push_back({g.begin, begin - 1 - g.begin});
      if (begin + len + 1 < g.begin + g.len) gaps.push_back({begin + len + 1, g.begin + g.len - begin - len - 1});
    }
    auto s = make_sum(a, b, Task::adversarial_sum);
    s.variant = "blocks=" + std::to_string(blocks);
    out.push_back(std::move(s));
  }
  return out;
}

/// Half valid words, half invalid; invalid words are either one-position
/// flips of valid words or uniform random strings that fail the oracle.
inline std::vector<TaskSample> gen_dyck(const LengthRange& range, std::size_t count, std::uint64_t seed) {
  if (range.max_len < 2) throw std::invalid_argument("gen_dyck: lengths must allow an even length >= 2");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<TaskSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto l = std::max<std::size_t>(2, detail::draw_even_length(rng, range));
    TaskSample s;
    if (coin(rng)) {
      s = make_dyck(random_dyck_word(rng, l));
      s.variant = "valid";
    } else if (coin(rng)) {
      Bits w = random_dyck_word(rng, l);
      w[std::uniform_int_distribution<std::size_t>(0, l - 1)(rng)] ^= 1;
      s = make_dyck(w);
      s.variant = "flip";
    } else {
      Bits w;
      do {
        w = detail::random_bits(rng, l);
      } while (dyck_oracle(w));
      s = make_dyck(w);
      s.variant = "random";
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<TaskSample> generate(Task task, const LengthRange& range, std::size_t count,
                                        std::uint64_t seed) {
  switch (task) {
    case Task::copy:
      return gen_copy(range, count, seed);
    case Task::sum:
      return gen_binary_sum(range, count, seed);
    case Task::adversarial_sum:
      return gen_adversarial_sum(range, count, seed);
    case Task::dyck:
      return gen_dyck(range, count, seed);
  }
  return {};
}

}  // namespace ldm::tasks
