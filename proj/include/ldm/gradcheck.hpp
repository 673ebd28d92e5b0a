// Central finite-difference check of recorded derivatives.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ldm/diff.hpp"

namespace ldm::diff {

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::vector<GradCheckEntry> flagged;  // entries beyond tolerance

  bool passed() const { return flagged.empty(); }
};

/// Relative error with an absolute floor: differences at or below `abs_tol`
/// count as exact so entries near zero do not blow up the ratio.
inline double relative_error(double analytic, double numeric, double abs_tol) {
  const double diff = std::fabs(analytic - numeric);
  if (diff <= abs_tol) return 0.0;
  return diff / std::max(std::fabs(analytic), std::fabs(numeric));
}

/// Compares d(loss)/d(theta) from one backward pass with
/// (L(theta + h) - L(theta - h)) / 2h for every scalar of every parameter.
/// `build(tape)` must record the scalar loss from the given parameters.
template <class Build>
GradCheckReport finite_difference_check(std::span<Parameter* const> params, Build&& build, double step,
                                        double rel_tol, double abs_tol = 1e-7) {
  for (auto* p : params) p->zero_grad();
  Tape tape;
  tape.backpropagate(build(tape));
  std::vector<std::vector<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  auto loss_at = [&] {
    Tape t;
    return build(t).value();
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = loss_at();
      p.value[i] = saved - step;
      const double down = loss_at();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = relative_error(a, numeric, abs_tol);
      ++report.checked;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.max_abs_error = std::max(report.max_abs_error, std::fabs(a - numeric));
      if (rel > rel_tol) report.flagged.push_back({p.name, i, a, numeric, rel});
    }
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace ldm::diff
