#include "rrl/model/dual_network.hpp"

#include "rrl/error.hpp"
#include "rrl/model/heads.hpp"
#include "rrl/model/local_features.hpp"
#include "rrl/numeric/ops.hpp"

namespace rrl {

void ModelConfig::validate() const {
  encoder.validate();
  require(K > 0, "model: K must be positive");
  require(refiner_channels > 0 && head_hidden > 0 && z_dim > 0, "model: head sizes must be positive");
  require(encoder.grid_size() == kAttentionGrid, "model: encoder output grid must be " +
                                                     std::to_string(kAttentionGrid) + "x" +
                                                     std::to_string(kAttentionGrid) + " to match the attention maps");
}

BufferSet fresh_head_buffers(const ModelConfig& config, bool with_predictor) {
  BufferSet buffers;
  for (const char* group : {"global", "local"}) {
    buffers["proj.bn." + std::string(group)] = BatchNormStats::fresh(config.head_hidden);
    if (with_predictor) buffers["pred.bn." + std::string(group)] = BatchNormStats::fresh(config.head_hidden);
  }
  return buffers;
}

DualNetworkState init_dual_network(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  DualNetworkState state;
  state.config = config;
  Rng rng(seed);
  Rng encoder_rng = rng.fork(1), local_rng = rng.fork(2), proj_rng = rng.fork(3), pred_rng = rng.fork(4);
  init_encoder(state.theta, config.encoder, encoder_rng);
  init_local_refiner(state.theta, config, local_rng);
  init_mlp_head(state.theta, "proj", config.encoder.out_dim(), config.head_hidden, config.z_dim, proj_rng);
  init_mlp_head(state.theta, "pred", config.z_dim, config.head_hidden, config.z_dim, pred_rng);
  for (const Parameter& p : state.theta.items()) {
    if (p.name.rfind("pred.", 0) != 0) state.xi.add(p.name, p.shape, p.value);
  }
  state.online_buffers = fresh_head_buffers(config, true);
  state.target_buffers = fresh_head_buffers(config, false);
  return state;
}

void ema_update(ParameterSet& target, const ParameterSet& online, double m) {
  require(m >= 0.0 && m <= 1.0, "ema_update: m must lie in [0, 1]");
  for (Parameter& p : target.items()) {
    const Parameter& src = online.at(p.name);
    require(src.shape == p.shape, "ema_update: shape mismatch for " + p.name);
    p.value = m * p.value + (1.0 - m) * src.value;
  }
}

void ema_update(DualNetworkState& state) { ema_update(state.xi, state.theta, state.m); }

DiffArray represent(const ModelConfig& config, const BoundParameters& params, Tape& tape, const Image& image,
                    const AttentionMap& attention, bool with_local) {
  const EncoderOutput enc = encode(config.encoder, params, tape, image);
  const DiffArray global_row = reshape(enc.global, {1, enc.global.size()});
  if (!with_local) return global_row;
  const DiffArray local = local_features(config, params, enc.grid, attention);
  const DiffArray parts[] = {global_row, local};
  return concat(parts, 0);
}

namespace {

BatchNormStats* buffer(BufferSet* buffers, const std::string& name) {
  if (!buffers) return nullptr;
  const auto it = buffers->find(name);
  require(it != buffers->end(), "missing batch-norm buffer " + name);
  return &it->second;
}

}  // namespace

FeatureBundle project_predict(const BoundParameters& params, const DiffArray& global_vecs, const DiffArray& local_vecs,
                              BufferSet* buffers, bool online, bool training) {
  FeatureBundle out;
  out.global_vecs = global_vecs;
  out.local_vecs = local_vecs;
  out.z_global = mlp_head(params, "proj", global_vecs, buffer(buffers, "proj.bn.global"), training);
  if (local_vecs.valid()) out.z_local = mlp_head(params, "proj", local_vecs, buffer(buffers, "proj.bn.local"), training);
  if (online) {
    out.q_global = mlp_head(params, "pred", out.z_global, buffer(buffers, "pred.bn.global"), training);
    if (local_vecs.valid()) {
      out.q_local = mlp_head(params, "pred", out.z_local, buffer(buffers, "pred.bn.local"), training);
    }
  } else {
    out.global_vecs = stop_gradient(out.global_vecs);
    out.z_global = stop_gradient(out.z_global);
    if (local_vecs.valid()) {
      out.local_vecs = stop_gradient(out.local_vecs);
      out.z_local = stop_gradient(out.z_local);
    }
  }
  return out;
}

}  // namespace rrl
