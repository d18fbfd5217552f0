#include <doctest.h>

#include <filesystem>

#include "rrl/error.hpp"
#include "rrl/numeric/gradcheck.hpp"
#include "rrl/relation/correlation_loss.hpp"
#include "rrl/relation/lp_oracle.hpp"
#include "rrl/relation/relation.hpp"
#include "rrl/relation/sinkhorn.hpp"
#include "rrl/relation/sinkhorn_check.hpp"

using namespace rrl;

namespace {

LabelMatrix labels(int rows, int cols, std::initializer_list<int> v) {
  LabelMatrix m(rows, cols);
  auto it = v.begin();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = *it++;
  }
  return m;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("relation_from_labels examples") {
  const RelationMatrix always = relation_from_labels(labels(3, 2, {1, 1, 0, 0, 1, 1}));
  CHECK(always.m(0, 1) == 1.0);
  CHECK(always.m(1, 0) == 1.0);
  const RelationMatrix never = relation_from_labels(labels(3, 2, {1, 0, 0, 1, 0, 0}));
  CHECK(never.m(0, 1) == 0.0);
  const RelationMatrix hand = relation_from_labels(labels(2, 2, {1, 1, 1, 0}));
  CHECK(hand.m(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(hand.m(0, 0) == 1.0);
  // An AU that never fires relates to nothing.
  const RelationMatrix silent = relation_from_labels(labels(2, 2, {0, 0, 0, 0}));
  CHECK(silent.m(0, 1) == 0.0);
  CHECK(silent.m(1, 1) == 1.0);
  CHECK_THROWS_AS(relation_from_labels(labels(1, 2, {2, 0})), ContractError);
}

TEST_CASE("cost_from_relation examples") {
  RelationMatrix r;
  r.m = Eigen::MatrixXd::Identity(3, 3);
  r.m(0, 1) = r.m(1, 0) = 1.0;
  r.m(0, 2) = r.m(2, 0) = 0.0;
  r.m(1, 2) = r.m(2, 1) = 0.35;
  r.names = default_au_names(3);
  const CostMatrix c = cost_from_relation(r);
  CHECK(c.c(0, 1) == 0.0);
  CHECK(c.c(0, 2) == 1.0);
  CHECK(c.c(1, 2) == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(c.c.diagonal().isZero(0.0));
}

TEST_CASE("marginal_weights clamp and normalize") {
  Eigen::MatrixXd o(3, 2), t(3, 2);
  o << 0.7, 0.0, -0.3, 0.0, 0.7, 0.0;
  t << 0.5, 0.0, 0.0, 0.0, 0.5, 0.0;
  const Eigen::VectorXd tg = vec({1.0, 0.0}), og = vec({1.0, 0.0});
  const MarginalWeights w = marginal_weights(o, tg, t, og);
  CHECK(w.a[0] == doctest::Approx(0.7));
  CHECK(w.a[1] == 0.0);
  CHECK(w.b[1] == 0.0);
  CHECK(w.b_norm[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w.b_norm[1] == 0.0);
  CHECK(w.b_norm[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_FALSE(w.a_fallback);

  const MarginalWeights z = marginal_weights(-o.cwiseAbs(), tg, t, og);
  CHECK(z.a_fallback);
  CHECK(z.a_norm.isApproxToConstant(1.0 / 3.0));
}

TEST_CASE("sinkhorn with constant cost returns the product coupling") {
  const Eigen::VectorXd a = vec({0.2, 0.5, 0.3}), b = vec({0.6, 0.1, 0.3});
  const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 3, 0.4);
  const TransportPlan plan = sinkhorn(c, a, b, {.epsilon = 0.01});
  CHECK((plan.pi - a * b.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(plan.converged);
}

TEST_CASE("sinkhorn on a two-point swap cost") {
  Eigen::MatrixXd c(2, 2);
  c << 0, 1, 1, 0;
  const Eigen::VectorXd u = vec({0.5, 0.5});
  const TransportPlan plan = sinkhorn(c, u, u, {.epsilon = 0.01});
  Eigen::MatrixXd expected(2, 2);
  expected << 0.5, 0, 0, 0.5;
  CHECK((plan.pi - expected).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("sinkhorn stays within one percent of the exact optimum on a K=3 instance") {
  Eigen::MatrixXd m(3, 3);
  m << 1, 0.62, 0.17, 0.62, 1, 0.41, 0.17, 0.41, 1;
  const Eigen::MatrixXd c = Eigen::MatrixXd::Ones(3, 3) - m;
  const Eigen::VectorXd a = vec({0.5, 0.3, 0.2}), b = vec({0.25, 0.25, 0.5});
  const TransportPlan plan = sinkhorn(c, a, b, {.epsilon = 0.01, .max_iter = 100000, .tol = 1e-10});
  // Optimum 0.237 from scipy.optimize.linprog (HiGHS).
  CHECK(std::abs(transport_cost(plan.pi, c) - 0.237) / 0.237 <= 0.01);
  CHECK(plan.violation < 1e-6);
}

TEST_CASE("sinkhorn never produces NaN with zero marginal entries") {
  const Eigen::VectorXd a = vec({0.0, 1.0, 0.0}), b = vec({0.5, 0.5, 0.0});
  const TransportPlan plan = sinkhorn(Eigen::MatrixXd::Random(3, 3).cwiseAbs().eval(), a, b, {.epsilon = 0.01});
  CHECK(plan.pi.allFinite());
  CHECK(plan.violation < 1e-6);
}

TEST_CASE("sinkhorn contract errors") {
  const Eigen::VectorXd u = vec({0.5, 0.5});
  CHECK_THROWS_AS(sinkhorn(Eigen::MatrixXd::Zero(2, 2).eval(), u, u, {.epsilon = 0.0}), ContractError);
  CHECK_THROWS_AS(sinkhorn(Eigen::MatrixXd::Zero(2, 2).eval(), vec({0.5, 0.6}), u), ContractError);
  CHECK_THROWS_AS(sinkhorn(Eigen::MatrixXd::Zero(3, 2).eval(), u, u), ContractError);
}

TEST_CASE("lp_oracle examples") {
  Eigen::MatrixXd c(2, 2);
  c << 0.3, 0.9, 0.4, 0.2;
  const auto point = lp_oracle(c, vec({1, 0}), vec({1, 0}));
  CHECK(point.plan(0, 0) == 1.0);
  CHECK(point.plan.sum() == 1.0);
  CHECK(point.cost == doctest::Approx(0.3));

  const Eigen::MatrixXd id_cost = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  const auto diag = lp_oracle(id_cost, u, u);
  CHECK(diag.cost == doctest::Approx(0.0));
  CHECK((diag.plan - Eigen::MatrixXd(u.asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lp_oracle matches an independent LP solver") {
  // Reference optima from scipy.optimize.linprog (HiGHS).
  Eigen::MatrixXd m(3, 3);
  m << 1, 0.62, 0.17, 0.62, 1, 0.41, 0.17, 0.41, 1;
  const auto three = lp_oracle<double>(Eigen::MatrixXd::Ones(3, 3) - m, vec({0.5, 0.3, 0.2}), vec({0.25, 0.25, 0.5}));
  CHECK(three.cost == doctest::Approx(0.237).epsilon(1e-12));

  Eigen::MatrixXd c4(4, 4);
  c4 << 0.0, 0.7, 0.2, 0.9, 0.3, 0.0, 0.8, 0.4, 0.6, 0.5, 0.0, 0.1, 0.2, 0.9, 0.3, 0.0;
  const auto four = lp_oracle<double>(c4, vec({0.1, 0.4, 0.3, 0.2}), vec({0.3, 0.1, 0.2, 0.4}));
  CHECK(four.cost == doctest::Approx(0.11).epsilon(1e-12));
  CHECK((four.plan.rowwise().sum() - vec({0.1, 0.4, 0.3, 0.2})).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(lp_oracle<double>(Eigen::MatrixXd::Zero(5, 5), Eigen::VectorXd::Constant(5, 0.2),
                                    Eigen::VectorXd::Constant(5, 0.2)),
                  ContractError);
}

TEST_CASE("correlation_loss examples") {
  Tape tape;
  const Eigen::MatrixXd plan = Eigen::MatrixXd::Constant(2, 2, 0.25);
  Vector same(4);
  same << 0.6, 0.8, 0.6, 0.8;
  const DiffArray o = tape.constant({2, 2}, same);
  CHECK(correlation_loss(o, o, plan).item() == doctest::Approx(-1.0).epsilon(1e-15));

  Vector x(4), y(4);
  x << 1, 0, 2, 0;
  y << 0, 3, 0, -1;
  CHECK(correlation_loss(tape.constant({2, 2}, x), tape.constant({2, 2}, y), plan).item() == 0.0);

  Vector oh(4), th(4);
  oh << 1, 2, 3, -1;
  th << 2, 1, 1, 1;
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = diag(1, 1) = 0.5;
  CHECK(correlation_loss(tape.constant({2, 2}, oh), tape.constant({2, 2}, th), diag).item() ==
        doctest::Approx(-0.623606797749979).epsilon(1e-14));
}

TEST_CASE("correlation_loss gradient") {
  const Eigen::MatrixXd plan = random_transport_instance(3, 9).cost.cwiseAbs() / 9.0;
  Vector t(12);
  for (Index i = 0; i < 12; ++i) t[i] = std::sin(1.0 + i);
  const ScalarFunction f = [&](Tape& tape, const DiffArray& x) {
    return correlation_loss(x, tape.constant({3, 4}, t), plan);
  };
  Vector x(12);
  for (Index i = 0; i < 12; ++i) x[i] = std::cos(0.3 * i) + 0.2;
  CHECK(check_gradient(f, {3, 4}, x, 1e-5) < 1e-6);
}

TEST_CASE("random transport instances are valid") {
  for (int K = 2; K <= 4; ++K) {
    const TransportInstance inst = random_transport_instance(K, 100 + static_cast<std::uint64_t>(K));
    CHECK(inst.a.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(inst.b.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(inst.cost.diagonal().isZero(0.0));
    CHECK((inst.cost - inst.cost.transpose()).isZero(0.0));
    CHECK(inst.cost.minCoeff() >= 0.0);
  }
}

TEST_CASE("relation CSV round trip") {
  const auto path = std::filesystem::temp_directory_path() / "rrl_relation_test.csv";
  const RelationMatrix r = relation_from_labels(labels(4, 3, {1, 1, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1}));
  write_relation_csv(path, r);
  const RelationMatrix back = read_relation_csv(path);
  CHECK(back.m == r.m);
  CHECK(back.names == r.names);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_relation_csv(path), IoError);
}
