#pragma once

#include <functional>
#include <optional>
#include <span>

#include "rrl/numeric/tape.hpp"

namespace rrl {

using ScalarFunction = std::function<DiffArray(Tape&, const DiffArray&)>;

struct GradientCheck {
  double max_relative_error = 0.0;
  Index worst_coordinate = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the tape gradient of `f` at `x` with central differences
/// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8). When `coordinates` is given
/// only those entries are perturbed.
GradientCheck check_gradient_detailed(const ScalarFunction& f, const Shape& shape, const Vector& x,
                                      double step, std::span<const Index> coordinates = {});

double check_gradient(const ScalarFunction& f, const Shape& shape, const Vector& x, double step);

}  // namespace rrl
