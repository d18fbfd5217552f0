#include "rrl/pipeline/gradient_suite.hpp"

#include <algorithm>
#include <utility>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/losses/losses.hpp"
#include "rrl/numeric/ops.hpp"
#include "rrl/numeric/random.hpp"
#include "rrl/pipeline/pretrain.hpp"
#include "rrl/relation/correlation_loss.hpp"
#include "rrl/relation/sinkhorn_check.hpp"

namespace rrl {
namespace {

constexpr double kLossTolerance = 1e-5;
constexpr double kCompositeTolerance = 1e-4;
constexpr double kStep = 1e-5;

Vector normals(Rng& rng, Index n) { return rng.normal_vector(n, 1.0); }

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.model = tiny_model_config();
  cfg.batch_size = 4;
  return cfg;
}

LandmarkSet random_landmarks(Rng& rng) {
  LandmarkSet l;
  for (int i = 0; i < kLandmarkCount; ++i) {
    l.points(i, 0) = rng.uniform(0.1, 0.9);
    l.points(i, 1) = rng.uniform(0.1, 0.9);
  }
  return l;
}

std::vector<AuRegionSpec> tiny_regions() {
  return {{0, {0, 1, 2, 3}, {0.0, 0.0}}, {1, {10, 11, 12}, {0.0, 0.0}}, {2, {20, 21, 22, 23, 24}, {0.0, 0.0}}};
}

RelationMatrix random_relation(int K, Rng& rng) {
  RelationMatrix r{Eigen::MatrixXd::Identity(K, K), default_au_names(K)};
  for (int i = 0; i < K; ++i) {
    for (int j = i + 1; j < K; ++j) r.m(i, j) = r.m(j, i) = rng.uniform();
  }
  return r;
}

GradientSuiteEntry entry(const std::string& name, std::uint64_t seed, const GradientCheck& check, double tol) {
  return {name, seed, check, tol, check.max_relative_error < tol};
}

}  // namespace

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.encoder.input_size = 56;
  cfg.encoder.patch = 2;
  cfg.encoder.embed_dim = 4;
  cfg.encoder.depths = {1, 1};
  cfg.encoder.heads = {1, 2};
  cfg.K = 3;
  cfg.refiner_channels = 4;
  cfg.head_hidden = 8;
  cfg.z_dim = 6;
  return cfg;
}

bool GradientSuiteReport::all_passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradientSuiteEntry& e) { return e.passed; });
}

double GradientSuiteReport::worst(const std::string& name) const {
  double w = 0.0;
  for (const auto& e : entries) {
    if (e.name == name) w = std::max(w, e.check.max_relative_error);
  }
  return w;
}

std::string GradientSuiteReport::csv() const {
  std::string out = "check,seed,max_relative_error,coordinate,analytic,numeric,tolerance,passed\n";
  for (const auto& e : entries) {
    out += e.name + "," + std::to_string(e.seed) + "," + io::format_double(e.check.max_relative_error) + "," +
           std::to_string(e.check.worst_coordinate) + "," + io::format_double(e.check.analytic) + "," +
           io::format_double(e.check.numeric) + "," + io::format_double(e.tolerance) + "," +
           (e.passed ? "1" : "0") + "\n";
  }
  return out;
}

GradientSuiteReport run_gradient_suite(int seeds, std::uint64_t base_seed, bool with_composite,
                                       double composite_step) {
  require(seeds >= 1, "gradient suite: need at least one seed");
  GradientSuiteReport report;
  const TrainConfig cfg = tiny_train_config();
  const int K = cfg.model.K;
  const Index B = 3, z = cfg.model.z_dim, d = cfg.model.encoder.out_dim();

  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
    Rng rng(seed);

    {
      const Vector target = normals(rng, B * z);
      const ScalarFunction f = [&](Tape& tape, const DiffArray& q) {
        return global_loss(q, tape.constant({B, z}, target));
      };
      report.entries.push_back(entry("l_glo", seed, check_gradient_detailed(f, {B, z}, normals(rng, B * z), kStep),
                                     kLossTolerance));
    }
    {
      const Vector tg = normals(rng, B * z), tk = normals(rng, B * K * z);
      const ScalarFunction f = [&](Tape& tape, const DiffArray& x) {
        const DiffArray q_local = block(x, 0, 0, B * K, z), q_global = block(x, B * K, 0, B, z);
        return local_loss(q_local, q_global, tape.constant({B, z}, tg), tape.constant({B * K, z}, tk), K);
      };
      report.entries.push_back(entry("l_loc", seed,
                                     check_gradient_detailed(f, {B * K + B, z}, normals(rng, (B * K + B) * z), kStep),
                                     kLossTolerance));
    }
    {
      const TransportInstance inst = random_transport_instance(K, rng.next());
      const Eigen::MatrixXd plan = sinkhorn<double>(inst.cost, inst.a, inst.b, {}).pi;
      const Vector t = normals(rng, K * d);
      const ScalarFunction f = [&](Tape& tape, const DiffArray& o) {
        return correlation_loss(o, tape.constant({K, d}, t), plan);
      };
      report.entries.push_back(entry("l_corr", seed, check_gradient_detailed(f, {K, d}, normals(rng, K * d), kStep),
                                     kLossTolerance));
    }
    {
      const DualNetworkState state = init_dual_network(cfg.model, seed);
      const CostMatrix cost = cost_from_relation(random_relation(K, rng));
      const Index rows = B * (1 + K);
      const Vector online = normals(rng, rows * d), target = normals(rng, rows * d);
      std::vector<Eigen::MatrixXd> plans;
      {
        Tape tape;
        plans = batch_objective(cfg, cost, bind(tape, state.theta, false), bind(tape, state.xi, false),
                                tape.constant({rows, d}, online), tape.constant({rows, d}, target), nullptr, nullptr)
                    .plans;
      }
      const ScalarFunction f = [&](Tape& tape, const DiffArray& x) {
        return batch_objective(cfg, cost, bind(tape, state.theta, false), bind(tape, state.xi, false), x,
                               tape.constant({rows, d}, target), nullptr, nullptr, &plans)
            .l_all;
      };
      report.entries.push_back(entry("l_all", seed, check_gradient_detailed(f, {rows, d}, online, kStep),
                                     kLossTolerance));
    }
    if (with_composite) {
      DualNetworkState state = init_dual_network(cfg.model, seed);
      // Move the target away from the online weights so both branches matter.
      for (Parameter& p : state.xi.items()) p.value += rng.normal_vector(p.value.size(), 0.05);
      const CostMatrix cost = cost_from_relation(random_relation(K, rng));
      const std::vector<AuRegionSpec> regions = tiny_regions();
      PreparedBatch batch;
      for (int b = 0; b < cfg.batch_size; ++b) {
        batch.indices.push_back(static_cast<std::size_t>(b));
        const int n = cfg.model.encoder.input_size;
        batch.view1.push_back(Image::NullaryExpr(n, n, [&] { return rng.uniform(); }));
        batch.view2.push_back(Image::NullaryExpr(n, n, [&] { return rng.uniform(); }));
        batch.attention1.push_back(build_attention(random_landmarks(rng), regions));
        batch.attention2.push_back(build_attention(random_landmarks(rng), regions));
      }
      const Vector theta = state.theta.flatten();
      std::vector<Eigen::MatrixXd> plans;
      {
        Tape tape;
        single_tape_objective(cfg, state, cost, batch, tape.constant({theta.size()}, theta), nullptr, &plans);
      }
      // Directional derivatives along random unit directions over all of
      // theta, the encoder only, and the local refiner only.
      const std::pair<const char*, const char*> groups[] = {
          {"encoder_composite", ""}, {"encoder_composite.encoder", "encoder."}, {"encoder_composite.local", "local."}};
      for (const auto& [name, prefix] : groups) {
        Vector direction = Vector::Zero(theta.size());
        Index offset = 0;
        for (const Parameter& p : state.theta.items()) {
          if (p.name.rfind(prefix, 0) == 0) direction.segment(offset, p.value.size()) = normals(rng, p.value.size());
          offset += p.value.size();
        }
        direction /= direction.norm();
        const std::vector<Index> broadcast(static_cast<std::size_t>(theta.size()), 0);
        const ScalarFunction f = [&](Tape& tape, const DiffArray& t) {
          const DiffArray moved = tape.constant({theta.size()}, theta) +
                                  gather(t, broadcast, {theta.size()}) * tape.constant({theta.size()}, direction);
          return single_tape_objective(cfg, state, cost, batch, moved, &plans);
        };
        report.entries.push_back(entry(name, seed, check_gradient_detailed(f, {1}, Vector::Zero(1), composite_step),
                                       kCompositeTolerance));
      }
    }
  }
  return report;
}

}  // namespace rrl
