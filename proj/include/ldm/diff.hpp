// Reverse-mode differentiation on a flat tape of vector-valued nodes.
//
// A Tape records every elementary operation in execution order, so the node
// list is already topologically sorted. Values and adjoints live in two flat
// arenas indexed by node offsets; a Var is a cheap (tape, id) handle.

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ldm::diff {

/// Trainable tensor stored row-major; `grad` accumulates across backward passes.
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

enum class Op : std::uint8_t {
  param,
  constant,
  add,
  sub,
  mul,
  scale_shift,     // a * x + b with constant a, b
  affine,          // W x + b
  relu,
  sigmoid,
  abs,
  min_reduce,      // elementwise min across equally sized operands
  sum,             // vector -> scalar
  fmod,            // C fmod by a positive constant
  floor_stopgrad,  // floor forward, zero derivative
  lerp,            // w * a + (1 - w) * b
  element,
  slice,
  concat,
  bce,             // binary cross-entropy against a constant target
  snap,            // nearest bin value; inference only, zero derivative
};

class Tape;

/// Handle to one node of a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  std::uint32_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t size() const;
  double value(std::size_t i = 0) const;
  double grad(std::size_t i = 0) const;
  std::span<const double> values() const;
  std::span<const double> grads() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  Tape() { reserve(1024, 16384); }

  void reserve(std::size_t nodes, std::size_t scalars) {
    nodes_.reserve(nodes);
    values_.reserve(scalars);
    args_.reserve(nodes * 2);
  }

  /// Drops every recorded node but keeps allocated capacity.
  void clear() {
    nodes_.clear();
    values_.clear();
    grads_.clear();
    args_.clear();
    params_.clear();
  }

  std::size_t node_count() const { return nodes_.size(); }

  /// Current end of the tape, for a later rewind().
  std::size_t mark() const { return nodes_.size(); }

  /// Drops every node recorded after `mark`; earlier handles stay valid.
  void rewind(std::size_t mark) {
    if (mark >= nodes_.size()) return;
    const Node& first = nodes_[mark];
    values_.resize(first.offset);
    args_.resize(first.args_begin);
    nodes_.resize(mark);
    grads_.clear();
    while (!params_.empty() && params_.back().first >= mark) params_.pop_back();
  }

  // ---- leaves ------------------------------------------------------------

  Var param(Parameter& p) {
    auto v = push(Op::param, p.size(), {});
    std::copy(p.value.begin(), p.value.end(), values_.begin() + nodes_[v.id()].offset);
    nodes_[v.id()].dim = static_cast<std::uint32_t>(p.cols);
    params_.emplace_back(v.id(), &p);
    return v;
  }

  Var constant(double x) {
    auto v = push(Op::constant, 1, {});
    values_[nodes_[v.id()].offset] = x;
    return v;
  }

  Var constant(std::span<const double> xs) {
    auto v = push(Op::constant, xs.size(), {});
    std::copy(xs.begin(), xs.end(), values_.begin() + nodes_[v.id()].offset);
    return v;
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) { return binary(Op::add, a, b); }
  Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
  Var mul(Var a, Var b) { return binary(Op::mul, a, b); }

  Var scale_shift(Var x, double scale, double shift) {
    auto v = push(Op::scale_shift, size(x), {x.id()});
    nodes_[v.id()].aux[0] = scale;
    nodes_[v.id()].aux[1] = shift;
    const auto xs = vals(x);
    auto ys = out(v);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = scale * xs[i] + shift;
    return v;
  }

  Var relu(Var x) {
    auto v = push(Op::relu, size(x), {x.id()});
    const auto xs = vals(x);
    auto ys = out(v);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = xs[i] > 0.0 ? xs[i] : 0.0;
    return v;
  }

  Var sigmoid(Var x) {
    auto v = push(Op::sigmoid, size(x), {x.id()});
    const auto xs = vals(x);
    auto ys = out(v);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = logistic(xs[i]);
    return v;
  }

  Var abs(Var x) {
    auto v = push(Op::abs, size(x), {x.id()});
    const auto xs = vals(x);
    auto ys = out(v);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = std::fabs(xs[i]);
    return v;
  }

  /// Elementwise minimum across operands; ties resolve to the earliest operand.
  Var min_reduce(std::span<const Var> xs) {
    if (xs.empty()) throw std::invalid_argument("min_reduce: no operands");
    const auto n = size(xs[0]);
    std::vector<std::uint32_t> ids;
    ids.reserve(xs.size());
    for (const auto& x : xs) {
      if (size(x) != n) throw std::invalid_argument("min_reduce: size mismatch");
      ids.push_back(x.id());
    }
    auto v = push(Op::min_reduce, n, ids);
    auto ys = out(v);
    const auto first = vals(xs[0]);
    std::copy(first.begin(), first.end(), ys.begin());
    for (std::size_t k = 1; k < xs.size(); ++k) {
      const auto cur = vals(xs[k]);
      for (std::size_t i = 0; i < n; ++i) ys[i] = std::min(ys[i], cur[i]);
    }
    return v;
  }

  Var min_reduce(std::initializer_list<Var> xs) {
    return min_reduce(std::span<const Var>(xs.begin(), xs.size()));
  }

  Var sum(Var x) {
    auto v = push(Op::sum, 1, {x.id()});
    double acc = 0.0;
    for (double e : vals(x)) acc += e;
    out(v)[0] = acc;
    return v;
  }

  Var fmod(Var x, double modulus) {
    if (!(modulus > 0.0)) throw std::domain_error("fmod: modulus must be positive");
    auto v = push(Op::fmod, size(x), {x.id()});
    nodes_[v.id()].aux[0] = modulus;
    const auto xs = vals(x);
    auto ys = out(v);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = std::fmod(xs[i], modulus);
    return v;
  }

  Var floor_stopgrad(Var x) {
    auto v = push(Op::floor_stopgrad, size(x), {x.id()});
    const auto xs = vals(x);
    auto ys = out(v);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = std::floor(xs[i]);
    return v;
  }

  /// w * a + (1 - w) * b. `w` may be a scalar broadcast over a and b.
  Var lerp(Var w, Var a, Var b) {
    const auto n = size(a);
    if (size(b) != n || (size(w) != n && size(w) != 1))
      throw std::invalid_argument("lerp: size mismatch");
    auto v = push(Op::lerp, n, {w.id(), a.id(), b.id()});
    const auto ws = vals(w), as = vals(a), bs = vals(b);
    auto ys = out(v);
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = ws[ws.size() == 1 ? 0 : i];
      ys[i] = wi * as[i] + (1.0 - wi) * bs[i];
    }
    return v;
  }

  // ---- structural --------------------------------------------------------

  Var affine(Var weight, Var bias, Var x) {
    const auto cols = size(x);
    const auto rows = size(bias);
    if (size(weight) != rows * cols) throw std::invalid_argument("affine: shape mismatch");
    auto v = push(Op::affine, rows, {weight.id(), bias.id(), x.id()});
    const auto w = vals(weight), b = vals(bias), xs = vals(x);
    auto ys = out(v);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = b[r];
      const double* row = w.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xs[c];
      ys[r] = acc;
    }
    return v;
  }

  Var element(Var x, std::size_t index) {
    if (index >= size(x)) throw std::out_of_range("element: index out of range");
    auto v = push(Op::element, 1, {x.id()});
    nodes_[v.id()].dim = static_cast<std::uint32_t>(index);
    out(v)[0] = vals(x)[index];
    return v;
  }

  Var slice(Var x, std::size_t begin, std::size_t count) {
    if (begin + count > size(x)) throw std::out_of_range("slice: range out of bounds");
    auto v = push(Op::slice, count, {x.id()});
    nodes_[v.id()].dim = static_cast<std::uint32_t>(begin);
    const auto xs = vals(x);
    std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(begin), count, out(v).begin());
    return v;
  }

  Var concat(std::span<const Var> xs) {
    std::size_t n = 0;
    std::vector<std::uint32_t> ids;
    ids.reserve(xs.size());
    for (const auto& x : xs) {
      n += size(x);
      ids.push_back(x.id());
    }
    auto v = push(Op::concat, n, ids);
    auto ys = out(v);
    std::size_t pos = 0;
    for (const auto& x : xs) {
      const auto s = vals(x);
      std::copy(s.begin(), s.end(), ys.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += s.size();
    }
    return v;
  }

  Var concat(std::initializer_list<Var> xs) {
    return concat(std::span<const Var>(xs.begin(), xs.size()));
  }

  /// Sum of binary cross-entropies of probabilities `p` against `target`,
  /// with p clamped to [eps, 1 - eps]. Clamped entries carry no derivative.
  Var bce(Var p, std::span<const double> target, double eps = 1e-7) {
    if (target.size() != size(p)) throw std::invalid_argument("bce: size mismatch");
    auto t = constant(target);
    auto v = push(Op::bce, 1, {p.id(), t.id()});
    nodes_[v.id()].aux[0] = eps;
    const auto ps = vals(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const double q = std::clamp(ps[i], eps, 1.0 - eps);
      acc -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
    }
    out(v)[0] = acc;
    return v;
  }

  /// Rounds each entry to the nearest of `count` equally spaced values on
  /// [lo, hi]; exact midpoints go to the lower value. Never differentiated.
  Var snap(Var x, double lo, double hi, int count) {
    auto v = push(Op::snap, size(x), {x.id()});
    const auto xs = vals(x);
    auto ys = out(v);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = snap_value(xs[i], lo, hi, count);
    return v;
  }

  // ---- backward ----------------------------------------------------------

  /// Clears every adjoint, seeds d(loss)/d(loss) = 1 and sweeps the tape in
  /// reverse. Adjoints of parameter leaves are added into Parameter::grad.
  void backpropagate(Var loss) {
    if (size(loss) != 1) throw std::invalid_argument("backpropagate: loss must be scalar");
    grads_.assign(values_.size(), 0.0);
    grads_[nodes_[loss.id()].offset] = 1.0;
    for (std::uint32_t id = loss.id() + 1; id-- > 0;) backward_node(id);
    for (auto& [id, p] : params_) {
      const auto& n = nodes_[id];
      for (std::size_t i = 0; i < n.size; ++i) p->grad[i] += grads_[n.offset + i];
    }
  }

  // ---- accessors ---------------------------------------------------------

  std::size_t size(Var x) const { return nodes_[x.id()].size; }

  std::span<const double> vals(Var x) const {
    const auto& n = nodes_[x.id()];
    return {values_.data() + n.offset, n.size};
  }

  std::span<const double> grads(Var x) const {
    const auto& n = nodes_[x.id()];
    if (grads_.size() < n.offset + n.size) return {};
    return {grads_.data() + n.offset, n.size};
  }

  Op kind(Var x) const { return nodes_[x.id()].op; }

  static double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  static double snap_value(double a, double lo, double hi, int count) {
    if (count < 2) throw std::invalid_argument("snap: need at least two bins");
    const double step = (hi - lo) / (count - 1);
    const double t = (a - lo) / step;
    int k = 0;
    if (t >= count - 1)
      k = count - 1;
    else if (t > 0.0)
      k = static_cast<int>(std::ceil(t - 0.5));  // lower bin wins an exact tie
    return k == count - 1 ? hi : lo + k * step;
  }

 private:
  struct Node {
    Op op;
    std::uint32_t size;
    std::uint32_t offset;
    std::uint32_t args_begin;
    std::uint32_t args_count;
    std::uint32_t dim = 0;
    double aux[2] = {0.0, 0.0};
  };

  Var push(Op op, std::size_t n, std::initializer_list<std::uint32_t> args) {
    return push(op, n, std::span<const std::uint32_t>(args.begin(), args.size()));
  }

  Var push(Op op, std::size_t n, std::span<const std::uint32_t> args) {
    Node node{op, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(values_.size()),
              static_cast<std::uint32_t>(args_.size()), static_cast<std::uint32_t>(args.size())};
    args_.insert(args_.end(), args.begin(), args.end());
    values_.resize(values_.size() + n, 0.0);
    nodes_.push_back(node);
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var binary(Op op, Var a, Var b) {
    const auto na = size(a), nb = size(b);
    if (na != nb && na != 1 && nb != 1) throw std::invalid_argument("elementwise: size mismatch");
    const auto n = std::max(na, nb);
    auto v = push(op, n, {a.id(), b.id()});
    const auto as = vals(a), bs = vals(b);
    auto ys = out(v);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = as[na == 1 ? 0 : i], y = bs[nb == 1 ? 0 : i];
      ys[i] = op == Op::add ? x + y : op == Op::sub ? x - y : x * y;
    }
    return v;
  }

  std::span<double> out(Var v) {
    const auto& n = nodes_[v.id()];
    return {values_.data() + n.offset, n.size};
  }

  std::uint32_t arg(const Node& n, std::size_t k) const { return args_[n.args_begin + k]; }

  void backward_node(std::uint32_t id) {
    const Node& n = nodes_[id];
    const double* g = grads_.data() + n.offset;
    const double* y = values_.data() + n.offset;
    auto gin = [&](std::uint32_t a) { return grads_.data() + nodes_[a].offset; };
    auto vin = [&](std::uint32_t a) { return values_.data() + nodes_[a].offset; };

    switch (n.op) {
      case Op::param:
      case Op::constant:
      case Op::floor_stopgrad:
      case Op::snap:
        break;
      case Op::add:
      case Op::sub:
      case Op::mul: {
        const auto a = arg(n, 0), b = arg(n, 1);
        const std::size_t na = nodes_[a].size, nb = nodes_[b].size;
        double* ga = gin(a);
        double* gb = gin(b);
        const double* va = vin(a);
        const double* vb = vin(b);
        const double sign = n.op == Op::sub ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n.size; ++i) {
          const std::size_t ia = na == 1 ? 0 : i, ib = nb == 1 ? 0 : i;
          if (n.op == Op::mul) {
            ga[ia] += g[i] * vb[ib];
            gb[ib] += g[i] * va[ia];
          } else {
            ga[ia] += g[i];
            gb[ib] += sign * g[i];
          }
        }
        break;
      }
      case Op::scale_shift: {
        double* gx = gin(arg(n, 0));
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += n.aux[0] * g[i];
        break;
      }
      case Op::affine: {
        const auto w = arg(n, 0), b = arg(n, 1), x = arg(n, 2);
        const std::size_t cols = nodes_[x].size;
        double* gw = gin(w);
        double* gb = gin(b);
        double* gx = gin(x);
        const double* vw = vin(w);
        const double* vx = vin(x);
        for (std::size_t r = 0; r < n.size; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          gb[r] += gr;
          double* gwr = gw + r * cols;
          const double* vwr = vw + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            gwr[c] += gr * vx[c];
            gx[c] += gr * vwr[c];
          }
        }
        break;
      }
      case Op::relu: {
        const auto x = arg(n, 0);
        double* gx = gin(x);
        const double* vx = vin(x);
        for (std::size_t i = 0; i < n.size; ++i)
          if (vx[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::sigmoid: {
        double* gx = gin(arg(n, 0));
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::abs: {
        const auto x = arg(n, 0);
        double* gx = gin(x);
        const double* vx = vin(x);
        for (std::size_t i = 0; i < n.size; ++i) {
          if (vx[i] > 0.0)
            gx[i] += g[i];
          else if (vx[i] < 0.0)
            gx[i] -= g[i];
        }
        break;
      }
      case Op::min_reduce: {
        for (std::size_t i = 0; i < n.size; ++i) {
          for (std::size_t k = 0; k < n.args_count; ++k) {
            const auto a = arg(n, k);
            if (vin(a)[i] == y[i]) {
              gin(a)[i] += g[i];
              break;
            }
          }
        }
        break;
      }
      case Op::sum: {
        const auto x = arg(n, 0);
        double* gx = gin(x);
        for (std::size_t i = 0; i < nodes_[x].size; ++i) gx[i] += g[0];
        break;
      }
      case Op::fmod: {
        double* gx = gin(arg(n, 0));
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i];
        break;
      }
      case Op::lerp: {
        const auto w = arg(n, 0), a = arg(n, 1), b = arg(n, 2);
        const bool scalar_w = nodes_[w].size == 1;
        double* gw = gin(w);
        double* ga = gin(a);
        double* gb = gin(b);
        const double* vw = vin(w);
        const double* va = vin(a);
        const double* vb = vin(b);
        for (std::size_t i = 0; i < n.size; ++i) {
          const std::size_t iw = scalar_w ? 0 : i;
          gw[iw] += g[i] * (va[i] - vb[i]);
          ga[i] += g[i] * vw[iw];
          gb[i] += g[i] * (1.0 - vw[iw]);
        }
        break;
      }
      case Op::element:
        gin(arg(n, 0))[n.dim] += g[0];
        break;
      case Op::slice: {
        double* gx = gin(arg(n, 0)) + n.dim;
        for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i];
        break;
      }
      case Op::concat: {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n.args_count; ++k) {
          const auto a = arg(n, k);
          double* ga = gin(a);
          for (std::size_t i = 0; i < nodes_[a].size; ++i) ga[i] += g[pos + i];
          pos += nodes_[a].size;
        }
        break;
      }
      case Op::bce: {
        const auto p = arg(n, 0), t = arg(n, 1);
        double* gp = gin(p);
        const double* vp = vin(p);
        const double* vt = vin(t);
        const double eps = n.aux[0];
        for (std::size_t i = 0; i < nodes_[p].size; ++i) {
          const double q = vp[i];
          if (q < eps || q > 1.0 - eps) continue;
          gp[i] += g[0] * (-vt[i] / q + (1.0 - vt[i]) / (1.0 - q));
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> args_;
  std::vector<std::pair<std::uint32_t, Parameter*>> params_;
};

inline std::size_t Var::size() const { return tape_->size(*this); }
inline double Var::value(std::size_t i) const { return tape_->vals(*this)[i]; }
inline double Var::grad(std::size_t i) const {
  const auto g = tape_->grads(*this);
  return g.empty() ? 0.0 : g[i];
}
inline std::span<const double> Var::values() const { return tape_->vals(*this); }
inline std::span<const double> Var::grads() const { return tape_->grads(*this); }

inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }

}  // namespace ldm::diff
