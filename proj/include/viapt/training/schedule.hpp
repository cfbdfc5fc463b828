#pragma once

#include <cstddef>

namespace viapt {

/// Linear ramp 0 -> base_lr over the warmup steps, then cosine decay to 0 at
/// total_steps. Throws ConfigError if step > total_steps or warmup > total.
double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                   double base_lr);

}  // namespace viapt
