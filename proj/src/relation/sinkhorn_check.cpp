#include "rrl/relation/sinkhorn_check.hpp"

#include <algorithm>
#include <cmath>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/numeric/random.hpp"
#include "rrl/relation/lp_oracle.hpp"

namespace rrl {
namespace {

Eigen::VectorXd simplex_point(int K, Rng& rng) {
  // Normalized exponentials are uniform on the simplex.
  Eigen::VectorXd v(K);
  for (int i = 0; i < K; ++i) v[i] = -std::log(1.0 - rng.uniform());
  return v / v.sum();
}

}  // namespace

TransportInstance random_transport_instance(int K, std::uint64_t seed) {
  require(K >= 1, "random_transport_instance: K must be positive");
  Rng rng(seed);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = i + 1; j < K; ++j) m(i, j) = m(j, i) = rng.uniform();
  }
  TransportInstance inst{Eigen::MatrixXd::Ones(K, K) - m, simplex_point(K, rng), simplex_point(K, rng)};
  return inst;
}

bool SinkhornCheckReport::all_passed() const {
  return std::all_of(trials.begin(), trials.end(), [](const SinkhornTrial& t) { return t.passed; });
}

std::string SinkhornCheckReport::csv() const {
  std::string out = "seed,sinkhorn_cost,exact_cost,relative_gap,violation,iterations,passed\n";
  for (const SinkhornTrial& t : trials) {
    out += std::to_string(t.seed) + "," + io::format_double(t.sinkhorn_cost) + "," + io::format_double(t.exact_cost) +
           "," + io::format_double(t.relative_gap) + "," + io::format_double(t.violation) + "," +
           std::to_string(t.iterations) + "," + (t.passed ? "1" : "0") + "\n";
  }
  return out;
}

SinkhornCheckReport run_sinkhorn_check(int K, double epsilon, int trials, std::uint64_t seed, double cost_tol,
                                       double violation_tol) {
  require(K >= 1 && K <= kLpOracleMaxK, "sinkhorn-check: K must lie in [1, 4]");
  require(trials >= 1, "sinkhorn-check: need at least one trial");
  SinkhornCheckReport report{K, epsilon, {}};
  SinkhornOptions options;
  options.epsilon = epsilon;
  options.max_iter = 100000;
  options.tol = violation_tol;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = splitmix64(seed + static_cast<std::uint64_t>(t));
    const TransportInstance inst = random_transport_instance(K, trial_seed);
    const TransportPlan<double> plan = sinkhorn<double>(inst.cost, inst.a, inst.b, options);
    const ExactTransport<double> exact = lp_oracle<double>(inst.cost, inst.a, inst.b);
    SinkhornTrial trial;
    trial.seed = trial_seed;
    trial.sinkhorn_cost = transport_cost(plan.pi, inst.cost);
    trial.exact_cost = exact.cost;
    const double gap = std::abs(trial.sinkhorn_cost - trial.exact_cost);
    trial.relative_gap = exact.cost > 0.0 ? gap / exact.cost : gap;
    trial.violation = plan.violation;
    trial.iterations = plan.iterations;
    trial.passed = trial.relative_gap <= cost_tol && trial.violation < violation_tol;
    report.trials.push_back(trial);
  }
  return report;
}

}  // namespace rrl
