#include <doctest.h>

#include <filesystem>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/pipeline/gradient_suite.hpp"
#include "rrl/probe/metrics.hpp"
#include "rrl/probe/probe.hpp"
#include "rrl/synth/synth_data.hpp"

using namespace rrl;

TEST_CASE("binarize_intensity threshold") {
  CHECK(binarize_intensity(0) == 0);
  CHECK(binarize_intensity(1) == 0);
  CHECK(binarize_intensity(2) == 1);
  CHECK(binarize_intensity(5) == 1);
  CHECK_THROWS_AS(binarize_intensity(6), ContractError);
  CHECK_THROWS_AS(binarize_intensity(-1), ContractError);
}

TEST_CASE("f1_score examples") {
  CHECK(f1_score(10, 0, 0) == 1.0);
  CHECK(f1_score(0, 5, 5) == 0.0);
  CHECK(f1_score(2, 1, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f1_score(0, 0, 0) == 1.0);
  CHECK(f1_score(0, 3, 0) == 0.0);
  CHECK(f1_score(3, 0, 1) == doctest::Approx(6.0 / 7.0).epsilon(1e-15));
  CHECK_THROWS_AS(f1_score(-1, 0, 0), ContractError);
}

TEST_CASE("report from hand-built counts") {
  std::vector<AuScore> counts(2);
  counts[0].tp = 2;
  counts[0].fp = 1;
  counts[0].fn = 1;
  counts[1].tp = 10;
  const EvalReport r = report_from_counts(counts);
  CHECK(r.f1_percent(0) == 66.7);
  CHECK(r.f1_percent(1) == 100.0);
  CHECK(r.average_percent() == 83.3);
  CHECK(r.average == (r.per_au[0].f1 + r.per_au[1].f1) / 2.0);
  const std::string csv = eval_report_csv(r);
  CHECK(csv == "au,tp,fp,fn,f1\nau_0,2,1,1,66.7\nau_1,10,0,0,100.0\naverage,83.3\n");
}

TEST_CASE("perfect predictions and order invariance") {
  LabelMatrix labels(6, 3);
  labels << 1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0;
  const EvalReport perfect = score_predictions(labels, labels);
  CHECK(perfect.average_percent() == 100.0);
  for (int k = 0; k < 3; ++k) CHECK(perfect.f1_percent(k) == 100.0);

  LabelMatrix pred = labels;
  pred(0, 0) = 0;
  pred(3, 1) = 1;
  const EvalReport r = score_predictions(pred, labels);
  const std::vector<int> order{5, 2, 0, 4, 1, 3};
  LabelMatrix pp(6, 3), ll(6, 3);
  for (int i = 0; i < 6; ++i) {
    pp.row(i) = pred.row(order[static_cast<std::size_t>(i)]);
    ll.row(i) = labels.row(order[static_cast<std::size_t>(i)]);
  }
  const EvalReport s = score_predictions(pp, ll);
  CHECK(eval_report_csv(s) == eval_report_csv(r));
  CHECK(r.per_au[0].tp == 2);
  CHECK(r.per_au[0].fn == 1);
  CHECK(r.per_au[1].fp == 1);
}

TEST_CASE("zero epochs leave the head at its initialization") {
  Rng rng(3);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(20, 5, [&] { return rng.normal(); });
  LabelMatrix y = LabelMatrix::Zero(20, 2);
  for (int i = 0; i < 20; i += 3) y(i, 1) = 1;
  ProbeConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 9;
  const ProbeHead head = train_probe(x, y, cfg);
  const ProbeHead init = init_probe_head(2, 5, false, 9);
  CHECK(parameter_hash(head.params) == parameter_hash(init.params));
}

TEST_CASE("separable features are fit perfectly") {
  Rng rng(4);
  const int n = 64;
  Eigen::MatrixXd x(n, 3);
  LabelMatrix y(n, 2);
  for (int i = 0; i < n; ++i) {
    x.row(i) << rng.normal(), rng.normal(), rng.normal();
    y(i, 0) = x(i, 0) + 0.5 * x(i, 2) > 0.2 ? 1 : 0;
    y(i, 1) = x(i, 1) < -0.3 ? 1 : 0;
    // Keep a margin around both boundaries.
    x(i, 0) += y(i, 0) ? 0.3 : -0.3;
    x(i, 1) += y(i, 1) ? -0.3 : 0.3;
  }
  ProbeConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  const ProbeHead head = train_probe(x, y, cfg);
  CHECK(probe_predict(head, x) == y);
  CHECK(evaluate(head, x, y).average_percent() == 100.0);
}

TEST_CASE("probing leaves the encoder untouched and round-trips through JSON") {
  SynthSpec spec = default_synth_spec(8);
  spec.n_subjects = 1;
  spec.per_subject = 6;
  const Dataset data = generate(spec);
  ModelConfig model = tiny_model_config();
  model.K = 8;
  const DualNetworkState state = init_dual_network(model, 2);
  const std::uint64_t before = parameter_hash(state.theta);
  ProbeConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.concat_local = true;
  const ProbeHead head = train_probe(state, data, spec.regions, cfg);
  CHECK(parameter_hash(state.theta) == before);
  CHECK(head.encoder_hash == before);
  CHECK(head.in_dim == (1 + 8) * model.encoder.out_dim());

  const auto path = std::filesystem::temp_directory_path() / "rrl_probe_test.json";
  save_probe_head(path, head);
  const ProbeHead back = load_probe_head(path);
  CHECK(parameter_hash(back.params) == parameter_hash(head.params));
  CHECK(back.encoder_hash == head.encoder_hash);
  CHECK(back.concat_local);
  const Eigen::MatrixXd f = extract_features(model, state.theta, data, spec.regions, true);
  CHECK(probe_predict(back, f) == probe_predict(head, f));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_probe_head(path), IoError);
}

TEST_CASE("probe option table") {
  ProbeConfig cfg;
  CHECK(probe_options().apply(cfg, "probe_epochs", "7"));
  CHECK(probe_options().apply(cfg, "probe_concat_local", "true"));
  CHECK(cfg.epochs == 7);
  CHECK(cfg.concat_local);
  CHECK_FALSE(probe_options().apply(cfg, "epochs", "7"));
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}
