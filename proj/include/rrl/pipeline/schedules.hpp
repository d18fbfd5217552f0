#pragma once

namespace rrl {

/// end + (start - end) * (1 + cos(pi * step / total)) / 2, evaluated so that
/// step 0 returns start and step == total returns end exactly.
double cosine_schedule(double start, double end, long long step, long long total);

// lr = scale * batch_size / 256.
double scaled_learning_rate(double scale, int batch_size);

}  // namespace rrl
