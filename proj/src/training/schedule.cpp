#include "viapt/training/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "viapt/numerics/error.hpp"

namespace viapt {

double lr_schedule(std::size_t step, std::size_t total, std::size_t warmup, double base_lr) {
  if (warmup > total) throw ConfigError("warmup steps exceed total steps");
  if (step > total) {
    throw ConfigError("schedule step " + std::to_string(step) + " past total " +
                      std::to_string(total));
  }
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return base_lr;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace viapt
