#pragma once

#include "rrl/attention/attention_maps.hpp"
#include "rrl/model/config.hpp"
#include "rrl/model/parameters.hpp"
#include "rrl/numeric/random.hpp"

namespace rrl {

void init_local_refiner(ParameterSet& params, const ModelConfig& cfg, Rng& rng);

/// Per AU k: feature grid gated by attention map k, refined by two shared
/// 3x3 conv + relu layers, then mean pooled. grid is [G*G x d] with G equal
/// to the attention grid; returns [K x d].
DiffArray local_features(const ModelConfig& cfg, const BoundParameters& params, const DiffArray& grid,
                         const AttentionMap& attention);

}  // namespace rrl
