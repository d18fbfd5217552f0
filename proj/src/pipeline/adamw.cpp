#include "rrl/pipeline/adamw.hpp"

#include <cmath>

#include "rrl/error.hpp"

namespace rrl {

void adamw_step(ParameterSet& params, const GradientMap& grads, double lr, double weight_decay,
                const AdamWOptions& options, AdamWState& state) {
  ++state.steps;
  const double correction1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.steps));
  const double correction2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.steps));
  for (Parameter& p : params.items()) {
    const auto it = grads.find(p.name);
    require(it != grads.end(), "adamw_step: no gradient for " + p.name);
    const Vector& g = it->second;
    require(g.size() == p.value.size(), "adamw_step: gradient size mismatch for " + p.name);
    Vector& m = state.first_moment[p.name];
    Vector& v = state.second_moment[p.name];
    if (m.size() == 0) {
      m = Vector::Zero(g.size());
      v = Vector::Zero(g.size());
    }
    m = options.beta1 * m + (1.0 - options.beta1) * g;
    v = options.beta2 * v + (1.0 - options.beta2) * g.cwiseAbs2();
    const double decay = (options.decay_vectors || p.shape.size() >= 2) ? weight_decay : 0.0;
    const Vector step = (m / correction1).array() / ((v / correction2).array().sqrt() + options.eps);
    p.value -= lr * (step + decay * p.value);
  }
}

}  // namespace rrl
