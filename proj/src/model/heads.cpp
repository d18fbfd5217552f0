#include "rrl/model/heads.hpp"

#include <cmath>

#include "rrl/numeric/ops.hpp"

namespace rrl {

void init_mlp_head(ParameterSet& params, const std::string& prefix, Index in, Index hidden, Index out, Rng& rng) {
  params.add(prefix + ".fc1.w", {in, hidden}, rng.normal_vector(in * hidden, 1.0 / std::sqrt(static_cast<double>(in))));
  params.add(prefix + ".fc1.b", {hidden}, Vector::Zero(hidden));
  params.add(prefix + ".bn.g", {hidden}, Vector::Ones(hidden));
  params.add(prefix + ".bn.b", {hidden}, Vector::Zero(hidden));
  params.add(prefix + ".fc2.w", {hidden, out},
             rng.normal_vector(hidden * out, 1.0 / std::sqrt(static_cast<double>(hidden))));
  params.add(prefix + ".fc2.b", {out}, Vector::Zero(out));
}

DiffArray mlp_head(const BoundParameters& params, const std::string& prefix, const DiffArray& x,
                   BatchNormStats* stats, bool training) {
  DiffArray h = add_row(matmul(x, params[prefix + ".fc1.w"]), params[prefix + ".fc1.b"]);
  h = relu(batch_norm(h, params[prefix + ".bn.g"], params[prefix + ".bn.b"], stats, training));
  return add_row(matmul(h, params[prefix + ".fc2.w"]), params[prefix + ".fc2.b"]);
}

}  // namespace rrl
