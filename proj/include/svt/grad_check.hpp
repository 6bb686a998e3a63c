#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "svt/tensor.hpp"

namespace svt {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double max_rel_error = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
    return worst;
  }
};

/// Compares the reverse-mode gradient of `loss_fn()` against central
/// differences (f(x+h) - f(x-h)) / 2h for every element of every parameter.
/// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
/// The check is defined for 64-bit tensors only.
template <class LossFn>
GradCheckReport grad_check(LossFn&& loss_fn, std::vector<NamedTensor<double>> params, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw Error("grad_check: step must be a positive finite value");
  for (auto& p : params) p.tensor.zero_grad();

  Tensor<double> loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NonFiniteError("grad_check: non-finite loss at the base point");
  backward(loss);

  GradCheckReport report;
  NoGradGuard no_grad;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.tensor.defined() ? p.name : p.name + " (undefined)";
    const std::vector<double> analytic = p.tensor.grad_or_zero();
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_fn().item();
      values[i] = saved - step;
      const double down = loss_fn().item();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NonFiniteError("grad_check: non-finite loss while perturbing " + p.name);
      }
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > entry.max_rel_error || entry.checked == 0) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
      }
      ++entry.checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace svt
