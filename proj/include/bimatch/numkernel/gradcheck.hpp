// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bimatch/numkernel/tensor.hpp"

namespace bimatch::numkernel {

struct GradCheckResult {
  // Worst over inputs of |a - n| / max(|a|, |n|, floor), norms taken over the
  // checked elements of one input tensor.
  double max_rel_error = 0.0;
  // Same ratio per element. Elements far below the tensor's own gradient
  // scale are dominated by roundoff here, so this one is diagnostic.
  double max_element_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Keeps all-zero gradients from dividing roundoff by nothing.
  double floor = 1e-6;
  // 0 checks every element; otherwise a fixed-stride subset per input.
  std::size_t max_elements_per_input = 0;
};

// Compares reverse-mode gradients of `loss_fn` against central differences
// with respect to every element of `inputs` (which must be leaves).
inline GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                       std::vector<Tensor> inputs,
                                       const GradCheckOptions& opt = {}) {
  for (Tensor& t : inputs) {
    if (!t.is_leaf()) throw InvalidArgument("check_gradients: inputs must be leaves");
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    const Tensor loss = loss_fn();
    backward(loss);
  }
  GradCheckResult r;
  for (Tensor& t : inputs) {
    const std::vector<double> analytic = t.has_grad()
                                             ? std::vector<double>(t.grad().begin(), t.grad().end())
                                             : std::vector<double>(t.numel(), 0.0);
    std::size_t stride = 1;
    if (opt.max_elements_per_input && t.numel() > opt.max_elements_per_input) {
      stride = (t.numel() + opt.max_elements_per_input - 1) / opt.max_elements_per_input;
    }
    auto values = t.mutable_data();
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < t.numel(); i += stride) {
      const double saved = values[i];
      values[i] = saved + opt.step;
      const double up = loss_fn().item();
      values[i] = saved - opt.step;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double abs_err = std::fabs(analytic[i] - numeric);
      const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), opt.floor});
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      r.max_element_rel_error = std::max(r.max_element_rel_error, abs_err / denom);
      diff_sq += abs_err * abs_err;
      a_sq += analytic[i] * analytic[i];
      n_sq += numeric * numeric;
      ++r.checked;
    }
    const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), opt.floor});
    r.max_rel_error = std::max(r.max_rel_error, std::sqrt(diff_sq) / denom);
    t.zero_grad();
  }
  return r;
}

}  // namespace bimatch::numkernel
