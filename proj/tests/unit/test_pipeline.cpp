#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/model/checkpoint.hpp"
#include "rrl/numeric/ops.hpp"
#include "rrl/pipeline/adamw.hpp"
#include "rrl/pipeline/augment.hpp"
#include "rrl/pipeline/config.hpp"
#include "rrl/pipeline/gradient_suite.hpp"
#include "rrl/pipeline/pretrain.hpp"
#include "rrl/pipeline/schedules.hpp"
#include "rrl/synth/synth_data.hpp"

using namespace rrl;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.model = tiny_model_config();
  cfg.model.K = 8;
  cfg.batch_size = 4;
  cfg.steps = 3;
  cfg.seed = 11;
  return cfg;
}

const Dataset& small_dataset() {
  static const Dataset data = [] {
    SynthSpec spec = default_synth_spec(8);
    spec.n_subjects = 2;
    spec.per_subject = 5;
    spec.seed = 4;
    return generate(spec);
  }();
  return data;
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_schedule(0.04, 0.4, 0, 100) == 0.04);
  CHECK(cosine_schedule(0.04, 0.4, 100, 100) == 0.4);
  CHECK(cosine_schedule(0.98, 1.0, 0, 7) == 0.98);
  CHECK(cosine_schedule(0.98, 1.0, 7, 7) == 1.0);
  CHECK(cosine_schedule(0.04, 0.4, 50, 100) == doctest::Approx(0.22).epsilon(1e-15));
  for (long long s = 1; s <= 100; ++s) CHECK(cosine_schedule(0.04, 0.4, s, 100) >= cosine_schedule(0.04, 0.4, s - 1, 100));
  CHECK_THROWS_AS(cosine_schedule(0.0, 1.0, 11, 10), ContractError);
  CHECK_THROWS_AS(cosine_schedule(0.0, 1.0, 0, 0), ContractError);
}

TEST_CASE("learning rate scaling") {
  CHECK(scaled_learning_rate(0.05, 256) == 0.05);
  CHECK(scaled_learning_rate(0.05, 16) == 0.05 * 16 / 256);
  TrainConfig cfg;
  CHECK(cfg.base_lr() == 0.05 * 16 / 256);
}

TEST_CASE("adamw examples") {
  ParameterSet p;
  p.add("w", {2}, Vector::Constant(2, 3.0));
  AdamWState state;
  GradientMap zero{{"w", Vector::Zero(2)}};
  adamw_step(p, zero, 0.1, 0.0, {}, state);
  CHECK(p.at("w").value == Vector::Constant(2, 3.0));

  ParameterSet q;
  q.add("w", {2, 1}, Vector::Constant(2, 3.0));
  AdamWState qs;
  adamw_step(q, zero, 0.1, 0.1, {}, qs);
  CHECK(q.at("w").value[0] == doctest::Approx(3.0 * (1.0 - 0.01)).epsilon(1e-15));

  // Two steps tracked by hand (moments, bias correction, decoupled decay).
  ParameterSet s;
  s.add("x", {1, 1}, Vector::Constant(1, 1.0));
  AdamWState ss;
  adamw_step(s, {{"x", Vector::Constant(1, 0.5)}}, 0.1, 0.01, {}, ss);
  CHECK(s.at("x").value[0] == doctest::Approx(0.8990000019999999).epsilon(1e-14));
  adamw_step(s, {{"x", Vector::Constant(1, -0.2)}}, 0.1, 0.01, {}, ss);
  CHECK(s.at("x").value[0] == doctest::Approx(0.8635404181145107).epsilon(1e-14));
  CHECK(ss.steps == 2);

  // Vectors skip decay when asked to.
  ParameterSet v;
  v.add("b", {2}, Vector::Constant(2, 1.0));
  AdamWState vs;
  adamw_step(v, {{"b", Vector::Zero(2)}}, 0.1, 0.5, {.decay_vectors = false}, vs);
  CHECK(v.at("b").value == Vector::Constant(2, 1.0));

  CHECK_THROWS_AS(adamw_step(v, {}, 0.1, 0.0, {}, vs), ContractError);
}

TEST_CASE("augmentation with every probability at zero is the identity") {
  const Dataset& data = small_dataset();
  const ViewPair views = make_view_pair(data.images[0], data.landmarks[0], AugmentConfig::none(), 5);
  CHECK(views.first.image == data.images[0]);
  CHECK(views.second.image == data.images[0]);
  CHECK(views.first.landmarks.points == data.landmarks[0].points);
}

TEST_CASE("flip reflects landmarks and mirrors the image") {
  const Dataset& data = small_dataset();
  AugmentConfig cfg = AugmentConfig::none();
  cfg.flip_p = 1.0;
  Rng rng(1);
  const AugmentedView v = augment_view(data.images[1], data.landmarks[1], cfg, rng);
  CHECK(v.flipped);
  CHECK(v.image == flip_image(data.images[1]));
  CHECK(v.image(3, 0) == data.images[1](3, 55));
  for (int i = 0; i < kLandmarkCount; ++i) {
    CHECK(v.landmarks.points(i, 0) == doctest::Approx(1.0 - data.landmarks[1].points(i, 0)).epsilon(1e-15));
  }
}

TEST_CASE("augmentation is reproducible and stays in range") {
  const Dataset& data = small_dataset();
  const AugmentConfig cfg;
  const ViewPair a = make_view_pair(data.images[2], data.landmarks[2], cfg, 99);
  const ViewPair b = make_view_pair(data.images[2], data.landmarks[2], cfg, 99);
  CHECK(a.first.image == b.first.image);
  CHECK(a.second.image == b.second.image);
  const ViewPair c = make_view_pair(data.images[2], data.landmarks[2], cfg, 100);
  CHECK(c.first.image != a.first.image);
  CHECK(a.first.image.minCoeff() >= 0.0);
  CHECK(a.first.image.maxCoeff() <= 1.0);
}

TEST_CASE("gaussian blur preserves constants and mass") {
  const Image flat = Image::Constant(20, 20, 0.3);
  CHECK((gaussian_blur(flat, 1.5) - flat).cwiseAbs().maxCoeff() < 1e-15);
  Image dot = Image::Zero(21, 21);
  dot(10, 10) = 1.0;
  const Image b = gaussian_blur(dot, 1.0);
  CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b(10, 10) == b.maxCoeff());
  CHECK(b(10, 9) == doctest::Approx(b(9, 10)).epsilon(1e-15));
}

TEST_CASE("key-value config parsing and option tables") {
  const KeyValues kv = parse_key_values("# comment\nsteps = 12\n\n  seed=3  # trailing\nsymmetrize = yes\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv[0].first == "steps");
  CHECK(kv[1].second == "3");
  CHECK_THROWS_AS(parse_key_values("no equals sign\n"), ContractError);

  TrainConfig cfg;
  for (const auto& [k, v] : kv) CHECK(train_options().apply(cfg, k, v));
  CHECK(cfg.steps == 12);
  CHECK(cfg.seed == 3);
  CHECK(cfg.symmetrize);
  CHECK_FALSE(train_options().apply(cfg, "no_such_key", "1"));
  CHECK_THROWS_AS(train_options().apply(cfg, "steps", "twelve"), ContractError);
  CHECK_THROWS_AS(parse_bool("maybe"), ContractError);

  // The echo parses back to the same settings.
  TrainConfig back;
  for (const auto& [k, v] : parse_key_values(train_options().echo(cfg))) train_options().apply(back, k, v);
  CHECK(train_options().echo(back) == train_options().echo(cfg));
}

TEST_CASE("batch sampling is deterministic and without replacement") {
  const TrainConfig cfg = small_config();
  const Dataset& data = small_dataset();
  const auto regions = default_au_regions(8);
  const PreparedBatch a = prepare_batch(cfg, data, regions, 2);
  const PreparedBatch b = prepare_batch(cfg, data, regions, 2);
  CHECK(a.indices == b.indices);
  CHECK(a.view1[3] == b.view1[3]);
  std::vector<std::size_t> sorted = a.indices;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(a.attention1.size() == 4);
  CHECK(batch_seed(11, 2) != batch_seed(11, 3));
}

TEST_CASE("split-tape gradients equal the single-tape gradient") {
  TrainConfig cfg = small_config();
  cfg.model.K = 3;
  for (bool symmetrize : {false, true}) {
    CAPTURE(symmetrize);
    cfg.symmetrize = symmetrize;
    DualNetworkState state = init_dual_network(cfg.model, 21);
    Rng rng(22);
    for (Parameter& p : state.xi.items()) p.value += rng.normal_vector(p.value.size(), 0.05);
    RelationMatrix relation{Eigen::MatrixXd::Identity(3, 3), default_au_names(3)};
    relation.m(0, 1) = relation.m(1, 0) = 0.7;
    relation.m(1, 2) = relation.m(2, 1) = 0.2;
    const CostMatrix cost = cost_from_relation(relation);
    const std::vector<AuRegionSpec> regions{{0, {17, 18, 19}, {0.0, 0.0}}, {1, {36, 39}, {0.0, 0.0}},
                                            {2, {48, 54, 57}, {0.0, 0.0}}};
    const LandmarkSet lm = landmark_template();
    PreparedBatch batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      batch.indices.push_back(static_cast<std::size_t>(b));
      batch.view1.push_back(Image::NullaryExpr(56, 56, [&] { return rng.uniform(); }));
      batch.view2.push_back(Image::NullaryExpr(56, 56, [&] { return rng.uniform(); }));
      batch.attention1.push_back(build_attention(lm, regions));
      batch.attention2.push_back(build_attention(lm.flipped_horizontally(), regions));
    }
    const DualNetworkState before = state;
    const BatchGradients split = compute_gradients(cfg, state, cost, batch);

    Tape tape;
    const DiffArray theta = tape.variable({before.theta.total_size()}, before.theta.flatten());
    const DiffArray loss = single_tape_objective(cfg, before, cost, batch, theta, &split.plans);
    CHECK(loss.item() == doctest::Approx(split.l_all).epsilon(1e-12));
    tape.backward(loss);
    const Vector g = theta.grad();
    Index offset = 0;
    double worst = 0.0;
    for (const Parameter& p : before.theta.items()) {
      const Vector& s = split.grads.at(p.name);
      const Vector ref = g.segment(offset, p.value.size());
      worst = std::max(worst, (s - ref).cwiseAbs().maxCoeff() / std::max(1e-8, ref.cwiseAbs().maxCoeff()));
      offset += p.value.size();
    }
    CHECK(worst < 1e-9);
    // Running statistics moved; the parameters themselves did not.
    CHECK(parameter_hash(state.theta) == parameter_hash(before.theta));
    CHECK(state.online_buffers.at("proj.bn.global").running_mean !=
          before.online_buffers.at("proj.bn.global").running_mean);
  }
}

TEST_CASE("gradient suite passes on two seeds") {
  const GradientSuiteReport report = run_gradient_suite(2, 1000);
  CHECK(report.all_passed());
  CHECK(report.worst("l_all") < 1e-5);
  CHECK(report.worst("encoder_composite") < 1e-4);
}

TEST_CASE("zero steps returns the initialization") {
  TrainConfig cfg = small_config();
  cfg.steps = 0;
  const PretrainResult r = pretrain(cfg, small_dataset(), relation_from_labels(small_dataset().labels),
                                    default_au_regions(8));
  const DualNetworkState init = init_dual_network(cfg.model, cfg.seed);
  CHECK(r.log.empty());
  CHECK(parameter_hash(r.state.theta) == parameter_hash(init.theta));
  CHECK(parameter_hash(r.state.xi) == parameter_hash(init.xi));
}

TEST_CASE("pretraining is bit-reproducible and follows the schedules") {
  const TrainConfig cfg = small_config();
  const RelationMatrix rel = relation_from_labels(small_dataset().labels);
  const PretrainResult a = pretrain(cfg, small_dataset(), rel, default_au_regions(8));
  const PretrainResult b = pretrain(cfg, small_dataset(), rel, default_au_regions(8));
  CHECK(loss_log_csv(a.log) == loss_log_csv(b.log));
  CHECK(parameter_hash(a.state.theta) == parameter_hash(b.state.theta));
  CHECK(parameter_hash(a.state.xi) == parameter_hash(b.state.xi));
  REQUIRE(a.log.size() == 3);
  CHECK(a.log[0].lr == cfg.base_lr());
  CHECK(a.log[0].wd == 0.04);
  CHECK(a.log[0].m == 0.98);
  CHECK(a.log[2].l_all == doctest::Approx(0.4 * a.log[2].l_glo + 0.6 * a.log[2].l_loc + a.log[2].l_corr));
  CHECK(parameter_hash(a.state.theta) != parameter_hash(init_dual_network(cfg.model, cfg.seed).theta));

  // Thread count does not change the result.
  TrainConfig threaded = cfg;
  threaded.threads = 3;
  const PretrainResult c = pretrain(threaded, small_dataset(), rel, default_au_regions(8));
  CHECK(parameter_hash(c.state.theta) == parameter_hash(a.state.theta));

  const std::string csv = loss_log_csv(a.log);
  CHECK(csv.rfind("step,l_glo,l_loc,l_corr,l_all,lr,wd,m\n", 0) == 0);
}

TEST_CASE("global-only training skips the local branch") {
  TrainConfig cfg = small_config();
  cfg.weights.alpha_loc = 0.0;
  cfg.weights.alpha_corr = 0.0;
  CHECK_FALSE(cfg.uses_local());
  const PretrainResult r = pretrain(cfg, small_dataset(), relation_from_labels(small_dataset().labels),
                                    default_au_regions(8));
  for (const LossRecord& rec : r.log) {
    CHECK(rec.l_loc == 0.0);
    CHECK(rec.l_corr == 0.0);
  }
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hits(37, 0);
  parallel_for(37, 4, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(5, 2, [](int i) { require(i != 3, "boom"); }), ContractError);
}

TEST_CASE("300 default steps lower the loss" * doctest::timeout(1500)) {
  SynthSpec spec = default_synth_spec(8);
  const Dataset data = generate(spec);
  TrainConfig cfg;
  cfg.steps = 300;
  const PretrainResult r = pretrain(cfg, data, relation_from_labels(data.labels), spec.regions);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += r.log[static_cast<std::size_t>(i)].l_all;
    last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].l_all;
  }
  CHECK(last < first);
}
