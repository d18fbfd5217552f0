#include "rrl/pipeline/pretrain.hpp"

#include <cmath>
#include <exception>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/losses/losses.hpp"
#include "rrl/numeric/ops.hpp"
#include "rrl/pipeline/schedules.hpp"
#include "rrl/relation/correlation_loss.hpp"
#include "rrl/relation/sinkhorn.hpp"

namespace rrl {
namespace {

bool is_head(const std::string& name) { return name.rfind("proj.", 0) == 0 || name.rfind("pred.", 0) == 0; }

ParameterSet head_parameters(const ParameterSet& params) {
  ParameterSet out;
  for (const Parameter& p : params.items()) {
    if (is_head(p.name)) out.add(p.name, p.shape, p.value);
  }
  return out;
}

Eigen::MatrixXd unit_rows(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) /= std::max(x.row(r).norm(), kNormFloor);
  return out;
}

std::vector<Index> rows_where(Index B, Index per_sample, Index first, Index count) {
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(B * count));
  for (Index b = 0; b < B; ++b) {
    for (Index k = 0; k < count; ++k) rows.push_back(b * per_sample + first + k);
  }
  return rows;
}

void add_into(GradientMap& total, const GradientMap& part) {
  for (const auto& [name, g] : part) {
    auto it = total.find(name);
    if (it == total.end()) {
      total.emplace(name, g);
    } else {
      it->second += g;
    }
  }
}

bool all_finite(const GradientMap& grads) {
  for (const auto& [name, g] : grads) {
    if (!g.allFinite()) return false;
  }
  return true;
}

}  // namespace

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = n * w / workers; i < n * (w + 1) / workers; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ParameterSet backbone_parameters(const ParameterSet& params) {
  ParameterSet out;
  for (const Parameter& p : params.items()) {
    if (!is_head(p.name)) out.add(p.name, p.shape, p.value);
  }
  return out;
}

std::uint64_t batch_seed(std::uint64_t run_seed, long long step) {
  return splitmix64(splitmix64(run_seed) ^ static_cast<std::uint64_t>(step));
}

PreparedBatch prepare_batch(const TrainConfig& cfg, const Dataset& data, const std::vector<AuRegionSpec>& regions,
                            long long step) {
  require(data.size() > 0, "prepare_batch: dataset is empty");
  PreparedBatch batch;
  batch.seed = batch_seed(cfg.seed, step);
  Rng rng(batch.seed);
  const std::size_t n = data.size();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  if (n >= B) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < B; ++i) {
      std::swap(order[i], order[i + rng.below(n - i)]);
      batch.indices.push_back(order[i]);
    }
  } else {
    for (std::size_t i = 0; i < B; ++i) batch.indices.push_back(rng.below(n));
  }
  batch.view1.resize(B);
  batch.view2.resize(B);
  batch.attention1.resize(B);
  batch.attention2.resize(B);
  const bool local = cfg.uses_local();
  parallel_for(static_cast<int>(B), cfg.threads, [&](int b) {
    const auto i = static_cast<std::size_t>(b);
    const std::size_t idx = batch.indices[i];
    ViewPair views = make_view_pair(data.images[idx], data.landmarks[idx], cfg.augment, splitmix64(batch.seed + i + 1));
    batch.view1[i] = std::move(views.first.image);
    batch.view2[i] = std::move(views.second.image);
    if (local) {
      batch.attention1[i] = build_attention(views.first.landmarks, regions);
      batch.attention2[i] = build_attention(views.second.landmarks, regions);
    }
  });
  return batch;
}

ObjectiveTerms batch_objective(const TrainConfig& cfg, const CostMatrix& cost, const BoundParameters& online_heads,
                               const BoundParameters& target_heads, const DiffArray& online_reps,
                               const DiffArray& target_reps, BufferSet* online_buffers, BufferSet* target_buffers,
                               const std::vector<Eigen::MatrixXd>* frozen_plans) {
  const int K = cfg.model.K;
  const bool local = cfg.uses_local();
  const Index per_sample = local ? 1 + K : 1;
  require(online_reps.dim() == 2 && online_reps.rows() % per_sample == 0 &&
              target_reps.rows() == online_reps.rows() && target_reps.cols() == online_reps.cols(),
          "batch_objective: representation stacks have unexpected shapes");
  const Index B = online_reps.rows() / per_sample;
  const Index d = online_reps.cols();
  Tape& tape = online_reps.tape();

  const std::vector<Index> global_rows = rows_where(B, per_sample, 0, 1);
  const DiffArray og = gather_rows(online_reps, global_rows);
  const DiffArray tg = gather_rows(target_reps, global_rows);
  DiffArray ol, tl;
  if (local) {
    const std::vector<Index> local_rows = rows_where(B, per_sample, 1, K);
    ol = gather_rows(online_reps, local_rows);
    tl = gather_rows(target_reps, local_rows);
  }
  const FeatureBundle on = project_predict(online_heads, og, ol, online_buffers, true, true);
  const FeatureBundle tn = project_predict(target_heads, tg, tl, target_buffers, false, true);

  ObjectiveTerms terms;
  terms.l_glo = global_loss(*on.q_global, tn.z_global);
  if (!local) {
    terms.l_loc = tape.scalar(0.0);
    terms.l_corr = tape.scalar(0.0);
  } else {
    terms.l_loc = local_loss(*on.q_local, *on.q_global, tn.z_global, tn.z_local, K);
    require(!frozen_plans || static_cast<Index>(frozen_plans->size()) == B, "batch_objective: one frozen plan per image");
    const Eigen::MatrixXd og_v = unit_rows(og.matrix()), tg_v = unit_rows(tn.global_vecs.matrix());
    std::vector<DiffArray> per_image;
    for (Index b = 0; b < B; ++b) {
      const DiffArray o_b = block(ol, b * K, 0, K, d);
      const DiffArray t_b = block(tn.local_vecs, b * K, 0, K, d);
      Eigen::MatrixXd plan;
      if (frozen_plans) {
        plan = (*frozen_plans)[static_cast<std::size_t>(b)];
      } else {
        const MarginalWeights w = marginal_weights(unit_rows(o_b.matrix()), tg_v.row(b).transpose(),
                                                   unit_rows(t_b.matrix()), og_v.row(b).transpose());
        const TransportPlan<double> solved = sinkhorn<double>(cost.c, w.a_norm, w.b_norm, cfg.sinkhorn);
        if (!solved.converged) ++terms.unconverged;
        plan = solved.pi;
      }
      per_image.push_back(correlation_loss(o_b, t_b, plan));
      terms.plans.push_back(std::move(plan));
    }
    DiffArray total = per_image.front();
    for (std::size_t i = 1; i < per_image.size(); ++i) total = total + per_image[i];
    terms.l_corr = scale(total, 1.0 / static_cast<double>(B));
  }
  terms.l_all = total_loss(terms.l_glo, terms.l_loc, terms.l_corr, cfg.weights);
  return terms;
}

namespace {

struct Direction {
  const std::vector<Image>* online_images;
  const std::vector<AttentionMap>* online_maps;
  const std::vector<Image>* target_images;
  const std::vector<AttentionMap>* target_maps;
};

std::vector<Direction> directions(const TrainConfig& cfg, const PreparedBatch& batch) {
  std::vector<Direction> out{{&batch.view1, &batch.attention1, &batch.view2, &batch.attention2}};
  if (cfg.symmetrize) out.push_back({&batch.view2, &batch.attention2, &batch.view1, &batch.attention1});
  return out;
}

}  // namespace

BatchGradients compute_gradients(const TrainConfig& cfg, DualNetworkState& state, const CostMatrix& cost,
                                 const PreparedBatch& batch) {
  const int B = batch.size();
  const bool local = cfg.uses_local();
  const ModelConfig& model = state.config;
  const std::vector<Direction> dirs = directions(cfg, batch);
  const int D = static_cast<int>(dirs.size());
  const ParameterSet online_backbone = backbone_parameters(state.theta);
  const ParameterSet target_backbone = backbone_parameters(state.xi);

  // Phase 1: per-image encoder passes, each on its own tape.
  struct ImagePass {
    std::unique_ptr<Tape> tape;
    BoundParameters params;
    DiffArray rep;
    Vector target_rep;
  };
  std::vector<ImagePass> passes(static_cast<std::size_t>(D * B));
  parallel_for(D * B, cfg.threads, [&](int job) {
    const Direction& dir = dirs[static_cast<std::size_t>(job / B)];
    const auto b = static_cast<std::size_t>(job % B);
    ImagePass& pass = passes[static_cast<std::size_t>(job)];
    pass.tape = std::make_unique<Tape>();
    pass.params = bind(*pass.tape, online_backbone, true);
    pass.rep = represent(model, pass.params, *pass.tape, (*dir.online_images)[b], (*dir.online_maps)[b], local);
    Tape target_tape;
    const BoundParameters target = bind(target_tape, target_backbone, false);
    pass.target_rep = represent(model, target, target_tape, (*dir.target_images)[b], (*dir.target_maps)[b], local).data();
  });

  // Phase 2: heads and losses on one batch tape.
  Tape tape;
  const BoundParameters online_heads = bind(tape, head_parameters(state.theta), true);
  const BoundParameters target_heads = bind(tape, head_parameters(state.xi), false);
  const Index rows = passes.front().rep.rows(), d = passes.front().rep.cols();
  std::vector<DiffArray> stacked;
  BatchGradients out;
  DiffArray l_glo, l_loc, l_corr, l_all;
  for (int dir = 0; dir < D; ++dir) {
    Vector online(static_cast<Index>(B) * rows * d), target(static_cast<Index>(B) * rows * d);
    for (int b = 0; b < B; ++b) {
      const ImagePass& pass = passes[static_cast<std::size_t>(dir * B + b)];
      online.segment(b * rows * d, rows * d) = pass.rep.data();
      target.segment(b * rows * d, rows * d) = pass.target_rep;
    }
    stacked.push_back(tape.variable({B * rows, d}, std::move(online)));
    const DiffArray target_reps = tape.constant({B * rows, d}, std::move(target));
    ObjectiveTerms t = batch_objective(cfg, cost, online_heads, target_heads, stacked.back(), target_reps,
                                       &state.online_buffers, &state.target_buffers);
    out.unconverged += t.unconverged;
    for (auto& p : t.plans) out.plans.push_back(std::move(p));
    if (dir == 0) {
      l_glo = t.l_glo, l_loc = t.l_loc, l_corr = t.l_corr, l_all = t.l_all;
    } else {
      l_glo = l_glo + t.l_glo, l_loc = l_loc + t.l_loc, l_corr = l_corr + t.l_corr, l_all = l_all + t.l_all;
    }
  }
  const double inv = 1.0 / static_cast<double>(D);
  l_all = scale(l_all, inv);
  tape.backward(l_all);
  out.l_glo = l_glo.item() * inv;
  out.l_loc = l_loc.item() * inv;
  out.l_corr = l_corr.item() * inv;
  out.l_all = l_all.item();
  out.grads = online_heads.gradients();

  // Phase 3: push the representation gradients back through each image tape.
  std::vector<GradientMap> image_grads(passes.size());
  parallel_for(D * B, cfg.threads, [&](int job) {
    ImagePass& pass = passes[static_cast<std::size_t>(job)];
    const Vector& g = stacked[static_cast<std::size_t>(job / B)].grad();
    const Vector seed = g.segment((job % B) * rows * d, rows * d);
    const DiffArray outputs[] = {pass.rep};
    const Vector seeds[] = {seed};
    pass.tape->backward(outputs, seeds);
    image_grads[static_cast<std::size_t>(job)] = pass.params.gradients();
    pass.tape.reset();
  });
  for (const GradientMap& g : image_grads) add_into(out.grads, g);
  return out;
}

DiffArray single_tape_objective(const TrainConfig& cfg, const DualNetworkState& state, const CostMatrix& cost,
                                const PreparedBatch& batch, const DiffArray& theta_flat,
                                const std::vector<Eigen::MatrixXd>* frozen_plans,
                                std::vector<Eigen::MatrixXd>* plans_out) {
  Tape& tape = theta_flat.tape();
  const bool local = cfg.uses_local();
  const BoundParameters online = bind_flat(theta_flat, state.theta);
  const BoundParameters target = bind(tape, state.xi, false);
  const std::vector<Direction> dirs = directions(cfg, batch);
  const auto B = static_cast<std::size_t>(batch.size());
  DiffArray total;
  for (std::size_t dir = 0; dir < dirs.size(); ++dir) {
    std::vector<DiffArray> online_rows, target_rows;
    for (std::size_t b = 0; b < B; ++b) {
      online_rows.push_back(represent(state.config, online, tape, (*dirs[dir].online_images)[b],
                                      (*dirs[dir].online_maps)[b], local));
      target_rows.push_back(represent(state.config, target, tape, (*dirs[dir].target_images)[b],
                                      (*dirs[dir].target_maps)[b], local));
    }
    std::vector<Eigen::MatrixXd> dir_plans;
    if (frozen_plans) {
      require(frozen_plans->size() == B * dirs.size(), "single_tape_objective: one frozen plan per image and direction");
      dir_plans.assign(frozen_plans->begin() + static_cast<std::ptrdiff_t>(dir * B),
                       frozen_plans->begin() + static_cast<std::ptrdiff_t>((dir + 1) * B));
    }
    ObjectiveTerms t = batch_objective(cfg, cost, online, target, concat(online_rows, 0), concat(target_rows, 0),
                                       nullptr, nullptr, frozen_plans && local ? &dir_plans : nullptr);
    if (plans_out) {
      for (auto& p : t.plans) plans_out->push_back(std::move(p));
    }
    total = dir == 0 ? t.l_all : total + t.l_all;
  }
  return scale(total, 1.0 / static_cast<double>(dirs.size()));
}

Trainer::Trainer(TrainConfig cfg, const Dataset& data, const RelationMatrix& relation, std::vector<AuRegionSpec> regions)
    : Trainer(cfg, data, relation, std::move(regions), init_dual_network(cfg.model, cfg.seed)) {}

Trainer::Trainer(TrainConfig cfg, const Dataset& data, const RelationMatrix& relation, std::vector<AuRegionSpec> regions,
                 DualNetworkState initial)
    : cfg_(std::move(cfg)),
      data_(data),
      cost_(cost_from_relation(relation)),
      regions_(std::move(regions)),
      state_(std::move(initial)) {
  cfg_.validate();
  relation.validate();
  require(data_.size() > 0, "pretrain: dataset is empty");
  require(relation.K() == cfg_.model.K, "pretrain: relation matrix has " + std::to_string(relation.K()) +
                                            " AUs but the model expects " + std::to_string(cfg_.model.K));
  require(static_cast<int>(regions_.size()) == cfg_.model.K, "pretrain: need one attention region per AU");
  for (const Image& img : data_.images) {
    require(img.rows() == cfg_.model.encoder.input_size && img.cols() == cfg_.model.encoder.input_size,
            "pretrain: image size does not match the encoder input");
  }
}

LossRecord Trainer::step() {
  const long long s = step_;
  const long long total = cfg_.steps;
  LossRecord rec;
  rec.step = s;
  rec.lr = cosine_schedule(cfg_.base_lr(), 0.0, s, total);
  rec.wd = cosine_schedule(cfg_.wd_start, cfg_.wd_end, s, total);
  rec.m = cosine_schedule(cfg_.ema_start, cfg_.ema_end, s, total);

  const PreparedBatch batch = prepare_batch(cfg_, data_, regions_, s);
  const BatchGradients g = compute_gradients(cfg_, state_, cost_, batch);
  rec.l_glo = g.l_glo;
  rec.l_loc = g.l_loc;
  rec.l_corr = g.l_corr;
  rec.l_all = g.l_all;
  if (!std::isfinite(g.l_all) || !all_finite(g.grads)) {
    std::ostringstream msg;
    msg << "training diverged at step " << s << " (batch seed " << batch.seed << ", images";
    for (std::size_t i : batch.indices) msg << ' ' << data_.ids[i];
    msg << "): L_all = " << g.l_all;
    throw TrainingDiverged(msg.str(), batch.seed);
  }

  AdamWOptions options;
  options.decay_vectors = false;
  adamw_step(state_.theta, g.grads, rec.lr, rec.wd, options, optimizer_);
  state_.m = rec.m;
  ema_update(state_);
  ++step_;
  return rec;
}

PretrainResult pretrain(const TrainConfig& cfg, const Dataset& data, const RelationMatrix& relation,
                        const std::vector<AuRegionSpec>& regions, const StepCallback& on_step) {
  Trainer trainer(cfg, data, relation, regions);
  PretrainResult result;
  while (trainer.steps_done() < cfg.steps) {
    result.log.push_back(trainer.step());
    if (on_step) on_step(result.log.back(), trainer.state());
  }
  result.state = trainer.state();
  return result;
}

std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string out = "step,l_glo,l_loc,l_corr,l_all,lr,wd,m\n";
  for (const LossRecord& r : log) {
    out += std::to_string(r.step);
    for (double v : {r.l_glo, r.l_loc, r.l_corr, r.l_all, r.lr, r.wd, r.m}) out += "," + io::format_double(v);
    out += "\n";
  }
  return out;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  io::write_file_atomic(path, loss_log_csv(log));
}

}  // namespace rrl
