#include "rrl/numeric/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rrl/error.hpp"

namespace rrl {
namespace {

double evaluate(const ScalarFunction& f, const Shape& shape, const Vector& x) {
  Tape tape;
  const DiffArray out = f(tape, tape.constant(shape, x));
  require(out.size() == 1, "check_gradient: function output must be scalar, got " + shape_string(out.shape()));
  return out.item();
}

}  // namespace

GradientCheck check_gradient_detailed(const ScalarFunction& f, const Shape& shape, const Vector& x,
                                      double step, std::span<const Index> coordinates) {
  require(step > 0.0, "check_gradient: step must be positive");
  require(shape_size(shape) == x.size(), "check_gradient: shape does not match point");

  Tape tape;
  const DiffArray input = tape.variable(shape, x);
  const DiffArray out = f(tape, input);
  require(out.size() == 1, "check_gradient: function output must be scalar, got " + shape_string(out.shape()));
  tape.backward(out);
  const Vector analytic = input.grad();

  std::vector<Index> coords(coordinates.begin(), coordinates.end());
  if (coords.empty()) {
    coords.resize(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
  }

  GradientCheck result;
  Vector probe = x;
  for (Index i : coords) {
    require(i >= 0 && i < x.size(), "check_gradient: coordinate out of range");
    probe[i] = x[i] + step;
    const double plus = evaluate(f, shape, probe);
    probe[i] = x[i] - step;
    const double minus = evaluate(f, shape, probe);
    probe[i] = x[i];
    const double numeric = (plus - minus) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > result.max_relative_error || result.worst_coordinate < 0) {
      result = {rel, i, analytic[i], numeric};
    }
  }
  return result;
}

double check_gradient(const ScalarFunction& f, const Shape& shape, const Vector& x, double step) {
  return check_gradient_detailed(f, shape, x, step).max_relative_error;
}

}  // namespace rrl
