#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ldm/diff.hpp"

namespace ldm {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  friend bool operator==(const AdamSettings&, const AdamSettings&) = default;
};

/// Adaptive moment estimation over a fixed list of parameters.
class Adam {
 public:
  Adam(std::vector<diff::Parameter*> params, AdamSettings settings)
      : params_(std::move(params)), settings_(settings) {
    for (auto* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  const AdamSettings& settings() const { return settings_; }
  long steps() const { return t_; }

  /// Global L2 norm of the accumulated gradients.
  double grad_norm() const {
    double s = 0.0;
    for (const auto* p : params_)
      for (double g : p->grad) s += g * g;
    return std::sqrt(s);
  }

  void step() {
    ++t_;
    double scale = 1.0;
    if (settings_.clip_norm > 0.0) {
      const double norm = grad_norm();
      if (norm > settings_.clip_norm) scale = settings_.clip_norm / norm;
    }
    const double c1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i] * scale;
        m[i] = settings_.beta1 * m[i] + (1.0 - settings_.beta1) * g;
        v[i] = settings_.beta2 * v[i] + (1.0 - settings_.beta2) * g * g;
        p.value[i] -= settings_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + settings_.epsilon);
      }
    }
  }

 private:
  std::vector<diff::Parameter*> params_;
  AdamSettings settings_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace ldm
