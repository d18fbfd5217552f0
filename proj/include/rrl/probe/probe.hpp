#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rrl/model/dual_network.hpp"
#include "rrl/pipeline/adamw.hpp"
#include "rrl/pipeline/config.hpp"
#include "rrl/probe/metrics.hpp"
#include "rrl/synth/dataset.hpp"

namespace rrl {

struct ProbeConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 0.01;
  double weight_decay = 0.0;
  // Append the K local vectors to the global feature.
  bool concat_local = false;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

const OptionTable<ProbeConfig>& probe_options();

/// One classifier per AU: batch norm over the feature, then a bias-free linear
/// map to two logits. Parameters are probe.au<k>.bn.g/b and probe.au<k>.w.
struct ProbeHead {
  int K = 0;
  Index in_dim = 0;
  bool concat_local = false;
  ParameterSet params;
  std::vector<BatchNormStats> stats;
  std::uint64_t encoder_hash = 0;
};

ProbeHead init_probe_head(int K, Index in_dim, bool concat_local, std::uint64_t seed);

// Frozen online-encoder features, one row per image, no augmentation.
Eigen::MatrixXd extract_features(const ModelConfig& config, const ParameterSet& theta, const Dataset& data,
                                 const std::vector<AuRegionSpec>& regions, bool concat_local, int threads = 1);

/// Minimizes the summed per-AU softmax cross-entropy with AdamW over shuffled
/// minibatches. Labels are N x K binary.
ProbeHead train_probe(const Eigen::MatrixXd& features, const LabelMatrix& labels, const ProbeConfig& cfg);
// Extracts features from the frozen encoder first and checks afterwards that
// the encoder parameters are byte-identical.
ProbeHead train_probe(const DualNetworkState& state, const Dataset& data, const std::vector<AuRegionSpec>& regions,
                      const ProbeConfig& cfg);

// Argmax over the two logits, batch norm in eval mode.
LabelMatrix probe_predict(const ProbeHead& head, const Eigen::MatrixXd& features);
EvalReport evaluate(const ProbeHead& head, const Eigen::MatrixXd& features, const LabelMatrix& labels);

void save_probe_head(const std::filesystem::path& path, const ProbeHead& head);
ProbeHead load_probe_head(const std::filesystem::path& path);

}  // namespace rrl
