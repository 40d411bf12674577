// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bimatch/numkernel/tensor.hpp"

namespace bimatch::numkernel {

struct AdamState {
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(std::span<const Tensor> params, double beta1 = 0.9,
                                 double beta2 = 0.999, double eps = 1e-8) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const Tensor& p : params) {
    s.shapes.push_back(p.shape());
    s.first_moment.emplace_back(p.numel(), 0.0);
    s.second_moment.emplace_back(p.numel(), 0.0);
  }
  return s;
}

// One bias-corrected Adam update of a flat parameter block. `t` is the
// 1-based step number after increment.
inline void adam_update(std::span<double> param, std::span<const double> grad,
                        std::span<double> m, std::span<double> v, std::uint64_t t, double beta1,
                        double beta2, double eps, double lr) {
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// Applies one step to every parameter using its accumulated gradient.
// Parameters that received no gradient are treated as having a zero one.
inline void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw InvalidArgument("adam_step: learning rate must be positive");
  if (params.size() != state.shapes.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but state for " +
                     std::to_string(state.shapes.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != state.shapes[i]) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                       shape_str(params[i].shape()) + ", state expects " +
                       shape_str(state.shapes[i]));
    }
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }
  ++state.step_count;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<const double> g = params[i].grad();
    if (g.empty()) {
      zeros.assign(params[i].numel(), 0.0);
      g = zeros;
    }
    adam_update(params[i].mutable_data(), g, state.first_moment[i], state.second_moment[i],
                state.step_count, state.beta1, state.beta2, state.eps, lr);
  }
}

}  // namespace bimatch::numkernel
