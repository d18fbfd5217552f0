#include "rrl/probe/probe.hpp"

#include <numeric>

#include <json.hpp>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/numeric/ops.hpp"
#include "rrl/pipeline/pretrain.hpp"

namespace rrl {
namespace {

std::string au_prefix(int k) { return "probe.au" + std::to_string(k); }

void check_labels(const ProbeHead& head, const Eigen::MatrixXd& features, const LabelMatrix& labels) {
  require(features.cols() == head.in_dim, "probe: feature width " + std::to_string(features.cols()) +
                                              " does not match the head (" + std::to_string(head.in_dim) + ")");
  require(labels.rows() == features.rows(), "probe: one label row per feature row");
  require(labels.cols() == head.K, "probe: labels have " + std::to_string(labels.cols()) + " AUs, head expects " +
                                       std::to_string(head.K));
  require((labels.array() == 0 || labels.array() == 1).all(), "probe: labels must be binary");
}

DiffArray logits(const BoundParameters& p, const DiffArray& x, int k, BatchNormStats* stats,
                 bool training) {
  const std::string prefix = au_prefix(k);
  return matmul(batch_norm(x, p[prefix + ".bn.g"], p[prefix + ".bn.b"], stats, training), p[prefix + ".w"]);
}

}  // namespace

void ProbeConfig::validate() const {
  require(epochs >= 0, "probe epochs must be non-negative");
  require(batch_size >= 2, "probe batch size must be at least 2");
  require(lr > 0.0 && weight_decay >= 0.0, "probe lr must be positive and weight decay non-negative");
  require(threads >= 1, "threads must be positive");
}

const OptionTable<ProbeConfig>& probe_options() {
  static const OptionTable<ProbeConfig> table = [] {
    using C = ProbeConfig;
    OptionTable<C> t;
    add_int_option(t, "probe_epochs", [](C& c) -> int& { return c.epochs; });
    add_int_option(t, "probe_batch_size", [](C& c) -> int& { return c.batch_size; });
    add_double_option(t, "probe_lr", [](C& c) -> double& { return c.lr; });
    add_double_option(t, "probe_weight_decay", [](C& c) -> double& { return c.weight_decay; });
    add_bool_option(t, "probe_concat_local", [](C& c) -> bool& { return c.concat_local; });
    add_int_option(t, "probe_seed", [](C& c) -> std::uint64_t& { return c.seed; });
    return t;
  }();
  return table;
}

ProbeHead init_probe_head(int K, Index in_dim, bool concat_local, std::uint64_t seed) {
  require(K > 0 && in_dim > 0, "probe head needs K > 0 and a positive input width");
  ProbeHead head{K, in_dim, concat_local, {}, {}, 0};
  Rng rng(seed);
  for (int k = 0; k < K; ++k) {
    const std::string prefix = au_prefix(k);
    head.params.add(prefix + ".bn.g", {in_dim}, Vector::Ones(in_dim));
    head.params.add(prefix + ".bn.b", {in_dim}, Vector::Zero(in_dim));
    head.params.add(prefix + ".w", {in_dim, 2}, rng.normal_vector(in_dim * 2, 0.01));
    head.stats.push_back(BatchNormStats::fresh(in_dim));
  }
  return head;
}

Eigen::MatrixXd extract_features(const ModelConfig& config, const ParameterSet& theta, const Dataset& data,
                                 const std::vector<AuRegionSpec>& regions, bool concat_local, int threads) {
  require(data.size() > 0, "extract_features: dataset is empty");
  require(!concat_local || static_cast<int>(regions.size()) == config.K, "extract_features: need one region per AU");
  const ParameterSet backbone = backbone_parameters(theta);
  const Index d = config.encoder.out_dim();
  const Index width = concat_local ? (1 + config.K) * d : d;
  Eigen::MatrixXd features(static_cast<Index>(data.size()), width);
  parallel_for(static_cast<int>(data.size()), threads, [&](int i) {
    Tape tape;
    const BoundParameters params = bind(tape, backbone, false);
    const auto s = static_cast<std::size_t>(i);
    const AttentionMap attention = concat_local ? build_attention(data.landmarks[s], regions) : AttentionMap{};
    const DiffArray rep = represent(config, params, tape, data.images[s], attention, concat_local);
    features.row(i) = rep.data().transpose();
  });
  return features;
}

ProbeHead train_probe(const Eigen::MatrixXd& features, const LabelMatrix& labels, const ProbeConfig& cfg) {
  cfg.validate();
  ProbeHead head = init_probe_head(static_cast<int>(labels.cols()), features.cols(), cfg.concat_local, cfg.seed);
  check_labels(head, features, labels);
  const auto n = static_cast<std::size_t>(features.rows());
  require(n >= 2, "train_probe: need at least two samples");
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  Rng rng = Rng(cfg.seed).fork(7);
  AdamWState optimizer;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start + 1 < n; start += batch) {
      // A trailing single sample cannot be batch normalized; fold it into the previous batch.
      std::size_t stop = std::min(start + batch, n);
      if (n - stop == 1) stop = n;
      const auto m = static_cast<Index>(stop - start);
      Vector x(m * features.cols());
      std::vector<std::vector<int>> targets(static_cast<std::size_t>(head.K));
      for (Index r = 0; r < m; ++r) {
        const auto row = static_cast<Index>(order[start + static_cast<std::size_t>(r)]);
        x.segment(r * features.cols(), features.cols()) = features.row(row).transpose();
        for (int k = 0; k < head.K; ++k) targets[static_cast<std::size_t>(k)].push_back(labels(row, k));
      }
      Tape tape;
      const BoundParameters p = bind(tape, head.params, true);
      const DiffArray input = tape.constant({m, features.cols()}, std::move(x));
      DiffArray loss;
      for (int k = 0; k < head.K; ++k) {
        const DiffArray ce = cross_entropy(logits(p, input, k, &head.stats[static_cast<std::size_t>(k)], true),
                                           targets[static_cast<std::size_t>(k)]);
        loss = k == 0 ? ce : loss + ce;
      }
      tape.backward(loss);
      adamw_step(head.params, p.gradients(), cfg.lr, cfg.weight_decay, AdamWOptions{}, optimizer);
      if (stop == n) break;
    }
  }
  return head;
}

ProbeHead train_probe(const DualNetworkState& state, const Dataset& data, const std::vector<AuRegionSpec>& regions,
                      const ProbeConfig& cfg) {
  const std::uint64_t before = parameter_hash(state.theta);
  const Eigen::MatrixXd features =
      extract_features(state.config, state.theta, data, regions, cfg.concat_local, cfg.threads);
  ProbeHead head = train_probe(features, data.labels, cfg);
  require(parameter_hash(state.theta) == before, "train_probe: encoder parameters changed during probing");
  head.encoder_hash = before;
  return head;
}

LabelMatrix probe_predict(const ProbeHead& head, const Eigen::MatrixXd& features) {
  require(features.rows() > 0, "evaluate: dataset is empty");
  require(features.cols() == head.in_dim, "probe: feature width does not match the head");
  Tape tape;
  const BoundParameters p = bind(tape, head.params, false);
  const DiffArray input = tape.constant({features.rows(), features.cols()},
                                        Eigen::Map<const Vector>(RowMatrix(features).data(), features.size()));
  LabelMatrix predicted(features.rows(), head.K);
  for (int k = 0; k < head.K; ++k) {
    BatchNormStats stats = head.stats[static_cast<std::size_t>(k)];
    const auto z = logits(p, input, k, &stats, false).matrix();
    for (Index i = 0; i < features.rows(); ++i) predicted(i, k) = z(i, 1) > z(i, 0) ? 1 : 0;
  }
  return predicted;
}

EvalReport evaluate(const ProbeHead& head, const Eigen::MatrixXd& features, const LabelMatrix& labels) {
  require(features.rows() > 0, "evaluate: dataset is empty");
  check_labels(head, features, labels);
  return score_predictions(probe_predict(head, features), labels);
}

void save_probe_head(const std::filesystem::path& path, const ProbeHead& head) {
  nlohmann::json j;
  j["format"] = "rrl-probe-1";
  j["K"] = head.K;
  j["in_dim"] = head.in_dim;
  j["concat_local"] = head.concat_local;
  j["encoder_hash"] = std::to_string(head.encoder_hash);
  for (const Parameter& p : head.params.items()) {
    j["params"][p.name] = std::vector<double>(p.value.data(), p.value.data() + p.value.size());
  }
  for (std::size_t k = 0; k < head.stats.size(); ++k) {
    const BatchNormStats& s = head.stats[k];
    j["stats"].push_back({{"mean", std::vector<double>(s.running_mean.data(), s.running_mean.data() + s.running_mean.size())},
                          {"var", std::vector<double>(s.running_var.data(), s.running_var.data() + s.running_var.size())}});
  }
  io::write_file_atomic(path, j.dump(1) + "\n");
}

ProbeHead load_probe_head(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
  require(j.value("format", "") == "rrl-probe-1", path.string() + ": not a probe head file");
  ProbeHead head = init_probe_head(j.at("K").get<int>(), j.at("in_dim").get<Index>(), j.at("concat_local").get<bool>(), 0);
  head.encoder_hash = std::stoull(j.at("encoder_hash").get<std::string>());
  for (Parameter& p : head.params.items()) {
    const auto values = j.at("params").at(p.name).get<std::vector<double>>();
    require(static_cast<Index>(values.size()) == p.value.size(), path.string() + ": wrong size for " + p.name);
    p.value = Eigen::Map<const Vector>(values.data(), p.value.size());
  }
  for (int k = 0; k < head.K; ++k) {
    const auto& s = j.at("stats").at(static_cast<std::size_t>(k));
    const auto mean = s.at("mean").get<std::vector<double>>(), var = s.at("var").get<std::vector<double>>();
    require(static_cast<Index>(mean.size()) == head.in_dim && var.size() == mean.size(), path.string() + ": bad stats");
    head.stats[static_cast<std::size_t>(k)].running_mean = Eigen::Map<const Vector>(mean.data(), head.in_dim);
    head.stats[static_cast<std::size_t>(k)].running_var = Eigen::Map<const Vector>(var.data(), head.in_dim);
  }
  return head;
}

}  // namespace rrl
