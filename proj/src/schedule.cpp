// SPDX-License-Identifier: Apache-2.0
#include "compnet/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace compnet {

double lr_at(const LrSchedule& schedule, int step, int total_steps) {
  if (step < 0 || step >= total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0," +
                            std::to_string(total_steps) + ")");
  }
  const double peak = schedule.peak();
  const int warmup_steps =
      static_cast<int>(std::lround(schedule.warmup_fraction * total_steps));
  if (step < warmup_steps) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }

  const int decay_span = total_steps - warmup_steps;
  const int pos = step - warmup_steps;
  if (schedule.decay == LrSchedule::Decay::kCosine) {
    // progress 0 at the warmup boundary keeps the schedule continuous there.
    const double progress = decay_span > 1 ? static_cast<double>(pos) / decay_span : 0.0;
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  }

  const int segments = schedule.num_decay_steps + 1;
  int seg = decay_span > 0 ? static_cast<int>((static_cast<long long>(pos) * segments) /
                                              decay_span)
                           : 0;
  seg = std::min(seg, segments - 1);
  return peak * std::pow(schedule.step_factor, seg);
}

}  // namespace compnet
