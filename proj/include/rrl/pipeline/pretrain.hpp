#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "rrl/attention/attention_maps.hpp"
#include "rrl/model/dual_network.hpp"
#include "rrl/pipeline/adamw.hpp"
#include "rrl/pipeline/config.hpp"
#include "rrl/relation/relation.hpp"
#include "rrl/synth/dataset.hpp"

namespace rrl {

struct LossRecord {
  long long step = 0;
  double l_glo = 0.0;
  double l_loc = 0.0;
  double l_corr = 0.0;
  double l_all = 0.0;
  double lr = 0.0;
  double wd = 0.0;
  double m = 0.0;
};

// Raised when the loss or a gradient stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::uint64_t batch_seed)
      : std::runtime_error(what), batch_seed(batch_seed) {}
  std::uint64_t batch_seed;
};

/// Two augmented views per sampled image together with their attention maps.
struct PreparedBatch {
  std::uint64_t seed = 0;
  std::vector<std::size_t> indices;
  std::vector<Image> view1, view2;
  std::vector<AttentionMap> attention1, attention2;

  int size() const { return static_cast<int>(indices.size()); }
};

std::uint64_t batch_seed(std::uint64_t run_seed, long long step);
// Samples batch_size distinct images (with replacement only when the dataset
// is smaller than the batch) and augments each twice.
PreparedBatch prepare_batch(const TrainConfig& cfg, const Dataset& data, const std::vector<AuRegionSpec>& regions,
                            long long step);

/// Loss terms for one direction: online network on one view, target network
/// on the other.
struct ObjectiveTerms {
  DiffArray l_glo, l_loc, l_corr, l_all;
  std::vector<Eigen::MatrixXd> plans;  // one transport plan per image
  int unconverged = 0;                 // Sinkhorn runs that hit max_iter
};

/// Heads and losses on top of stacked representations. online_reps and
/// target_reps are [B*(1+K) x d] (or [B x d] without the local branch),
/// sample-major with the global row first. Plans are recomputed from the
/// current features unless frozen_plans is given; they never carry gradient.
ObjectiveTerms batch_objective(const TrainConfig& cfg, const CostMatrix& cost, const BoundParameters& online_heads,
                               const BoundParameters& target_heads, const DiffArray& online_reps,
                               const DiffArray& target_reps, BufferSet* online_buffers, BufferSet* target_buffers,
                               const std::vector<Eigen::MatrixXd>* frozen_plans = nullptr);

struct BatchGradients {
  GradientMap grads;  // one entry per online parameter
  double l_glo = 0.0, l_loc = 0.0, l_corr = 0.0, l_all = 0.0;
  std::vector<Eigen::MatrixXd> plans;  // direction-major, then per image
  int unconverged = 0;
};

/// Gradient of the objective with respect to every online parameter. Each
/// image runs its encoder on a private tape; the heads and losses run on one
/// batch tape whose input gradients are then pushed back through the
/// per-image tapes and summed in image order. Updates the head batch-norm
/// running statistics in `state`.
BatchGradients compute_gradients(const TrainConfig& cfg, DualNetworkState& state, const CostMatrix& cost,
                                 const PreparedBatch& batch);

/// The same objective recorded on a single tape as a function of the flattened
/// online parameters (layout of state.theta), with running statistics left
/// alone. Used to cross-check compute_gradients and for finite differences.
DiffArray single_tape_objective(const TrainConfig& cfg, const DualNetworkState& state, const CostMatrix& cost,
                                const PreparedBatch& batch, const DiffArray& theta_flat,
                                const std::vector<Eigen::MatrixXd>* frozen_plans = nullptr,
                                std::vector<Eigen::MatrixXd>* plans_out = nullptr);

// Encoder and local-refiner parameters (everything but the heads).
ParameterSet backbone_parameters(const ParameterSet& params);

/// Owns the training state; each call to step() performs one optimizer update
/// followed by the EMA update of the target network.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const Dataset& data, const RelationMatrix& relation, std::vector<AuRegionSpec> regions);
  Trainer(TrainConfig cfg, const Dataset& data, const RelationMatrix& relation, std::vector<AuRegionSpec> regions,
          DualNetworkState initial);

  LossRecord step();
  long long steps_done() const { return step_; }
  const DualNetworkState& state() const { return state_; }
  const AdamWState& optimizer() const { return optimizer_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  const Dataset& data_;
  CostMatrix cost_;
  std::vector<AuRegionSpec> regions_;
  DualNetworkState state_;
  AdamWState optimizer_;
  long long step_ = 0;
};

struct PretrainResult {
  DualNetworkState state;
  std::vector<LossRecord> log;
};

using StepCallback = std::function<void(const LossRecord&, const DualNetworkState&)>;

PretrainResult pretrain(const TrainConfig& cfg, const Dataset& data, const RelationMatrix& relation,
                        const std::vector<AuRegionSpec>& regions, const StepCallback& on_step = {});

// Columns: step, l_glo, l_loc, l_corr, l_all, lr, wd, m.
std::string loss_log_csv(const std::vector<LossRecord>& log);
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

// Runs fn(0) .. fn(n - 1) on up to `threads` workers in contiguous blocks.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace rrl
