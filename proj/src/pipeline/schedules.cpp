#include "rrl/pipeline/schedules.hpp"

#include <cmath>
#include <numbers>

#include "rrl/error.hpp"

namespace rrl {

double cosine_schedule(double start, double end, long long step, long long total) {
  require(total > 0, "cosine_schedule: total must be positive");
  require(step >= 0 && step <= total, "cosine_schedule: step must lie in [0, total]");
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return start * w + end * (1.0 - w);
}

double scaled_learning_rate(double scale, int batch_size) {
  require(batch_size > 0, "batch size must be positive");
  return scale * static_cast<double>(batch_size) / 256.0;
}

}  // namespace rrl
