#pragma once

#include <string>

#include "rrl/model/parameters.hpp"
#include "rrl/numeric/random.hpp"

namespace rrl {

// linear -> batch-norm -> relu -> linear, registered under `prefix`.
void init_mlp_head(ParameterSet& params, const std::string& prefix, Index in, Index hidden, Index out, Rng& rng);

// x is [n x in]. Training mode normalizes with batch statistics and, when
// stats is non-null, updates its running averages.
DiffArray mlp_head(const BoundParameters& params, const std::string& prefix, const DiffArray& x,
                   BatchNormStats* stats, bool training);

}  // namespace rrl
