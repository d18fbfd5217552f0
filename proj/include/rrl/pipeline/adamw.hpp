#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rrl/model/parameters.hpp"

namespace rrl {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // When false, one-dimensional tensors (biases, norm scales) skip decay.
  bool decay_vectors = true;
};

struct AdamWState {
  std::map<std::string, Vector> first_moment;
  std::map<std::string, Vector> second_moment;
  std::int64_t steps = 0;
};

/// Decoupled weight decay Adam:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// with bias-corrected m_hat, v_hat. Every parameter in `params` needs a
/// gradient entry of matching size.
void adamw_step(ParameterSet& params, const GradientMap& grads, double lr, double weight_decay,
                const AdamWOptions& options, AdamWState& state);

}  // namespace rrl
