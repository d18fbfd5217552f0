#pragma once

#include <Eigen/Dense>

#include "rrl/numeric/tape.hpp"

namespace rrl {

/// -sum_ij cos(o_i, t_j) * plan_ij for o, t given as K x d arrays (one AU per
/// row). The plan enters as a constant weighting.
DiffArray correlation_loss(const DiffArray& o, const DiffArray& t, const Eigen::MatrixXd& plan);

}  // namespace rrl
