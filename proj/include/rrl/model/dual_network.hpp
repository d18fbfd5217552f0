#pragma once

#include <cstdint>
#include <optional>

#include "rrl/attention/attention_maps.hpp"
#include "rrl/model/config.hpp"
#include "rrl/model/encoder.hpp"
#include "rrl/model/parameters.hpp"

namespace rrl {

/// Online parameters theta (encoder, local refiner, projector g, predictor q)
/// and target parameters xi (the same minus the predictor). Only theta is
/// optimized; xi follows theta through ema_update.
struct DualNetworkState {
  ModelConfig config;
  ParameterSet theta;
  ParameterSet xi;
  BufferSet online_buffers;
  BufferSet target_buffers;
  double m = 0.98;
};

DualNetworkState init_dual_network(const ModelConfig& config, std::uint64_t seed);

// Names of the per-group batch-norm buffers used by the heads.
BufferSet fresh_head_buffers(const ModelConfig& config, bool with_predictor);

// xi <- m * xi + (1 - m) * theta for every target parameter.
void ema_update(ParameterSet& target, const ParameterSet& online, double m);
void ema_update(DualNetworkState& state);

/// Encoder + local branch for one image: [(1 + K) x d], row 0 the pooled
/// global vector, rows 1..K the attention-gated local vectors. With
/// with_local false only the global row is produced.
DiffArray represent(const ModelConfig& config, const BoundParameters& params, Tape& tape, const Image& image,
                    const AttentionMap& attention, bool with_local = true);

/// Projections (and, online, predictions) of a batch of representations.
struct FeatureBundle {
  DiffArray global_vecs;  // [B x d]
  DiffArray local_vecs;   // [B*K x d], sample-major; invalid when absent
  DiffArray z_global;     // [B x z]
  DiffArray z_local;      // [B*K x z]
  std::optional<DiffArray> q_global;
  std::optional<DiffArray> q_local;
};

// Projection is shared by global and local vectors; each group keeps its own
// batch statistics. The predictor exists only for the online network, and a
// target bundle is gradient-stopped.
FeatureBundle project_predict(const BoundParameters& params, const DiffArray& global_vecs, const DiffArray& local_vecs,
                              BufferSet* buffers, bool online, bool training);

}  // namespace rrl
