// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace compnet {

// Learning-rate schedule: linear warmup from 0 to peak, then either evenly
// spaced multiplicative step decay or cosine decay to ~0. The peak rate is
// base_rate * batch_size (linear scaling).
struct LrSchedule {
  enum class Decay { kStep, kCosine };

  double base_rate = 0.1 / 256.0;  // per-example rate
  int batch_size = 32;
  double warmup_fraction = 0.05;
  Decay decay = Decay::kStep;
  double step_factor = 0.5;  // applied num_decay_steps times after warmup
  int num_decay_steps = 10;

  double peak() const { return base_rate * batch_size; }
};

// Rate at a step index in [0, total_steps). Warmup covers the first
// round(warmup_fraction * total_steps) steps, ramping linearly from 0 so the
// first post-warmup step sits exactly at the peak. Step decay splits the
// remaining steps into num_decay_steps + 1 equal segments; the factor is
// applied once per boundary, so the final segment runs at
// peak * factor^num_decay_steps.
double lr_at(const LrSchedule& schedule, int step, int total_steps);

}  // namespace compnet
