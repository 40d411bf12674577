// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "bimatch/common.hpp"

namespace bimatch::numkernel {

// Linear warmup from warmup_start_lr to base_lr, then cosine decay.
struct LrSchedule {
  double base_lr = 1e-5;
  double warmup_start_lr = 1e-6;
  std::size_t warmup_epochs = 5;
  std::size_t total_epochs = 60;
  std::size_t steps_per_epoch = 1;

  std::size_t warmup_steps() const { return warmup_epochs * steps_per_epoch; }
  std::size_t total_steps() const { return total_epochs * steps_per_epoch; }

  void validate() const {
    if (!(base_lr > 0.0) || !(warmup_start_lr > 0.0)) {
      throw ConfigError("learning rates must be positive");
    }
    if (steps_per_epoch == 0 || total_epochs == 0) {
      throw ConfigError("schedule needs at least one epoch and one step per epoch");
    }
    if (warmup_epochs >= total_epochs) {
      throw ConfigError("warmup_epochs must be smaller than the number of epochs");
    }
  }
};

inline double lr_at(std::size_t step, const LrSchedule& s) {
  s.validate();
  if (step >= s.total_steps()) {
    throw RangeError("lr_at: step " + std::to_string(step) + " outside schedule of " +
                     std::to_string(s.total_steps()) + " steps");
  }
  const std::size_t warm = s.warmup_steps();
  if (step < warm) {
    const double frac = static_cast<double>(step) / static_cast<double>(warm);
    return s.warmup_start_lr + (s.base_lr - s.warmup_start_lr) * frac;
  }
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(s.total_steps() - warm);
  return s.base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace bimatch::numkernel
