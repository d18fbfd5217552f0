#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrl/relation/sinkhorn.hpp"

namespace rrl {

/// Random transport instance: cost 1 - M for a random relation matrix M
/// (symmetric, unit diagonal, off-diagonal uniform in [0, 1]) and marginals
/// drawn uniformly from the simplex.
struct TransportInstance {
  Eigen::MatrixXd cost;
  Eigen::VectorXd a, b;
};

TransportInstance random_transport_instance(int K, std::uint64_t seed);

struct SinkhornTrial {
  std::uint64_t seed = 0;
  double sinkhorn_cost = 0.0;
  double exact_cost = 0.0;
  double relative_gap = 0.0;  // |sinkhorn - exact| / |exact|
  double violation = 0.0;
  int iterations = 0;
  bool passed = false;
};

struct SinkhornCheckReport {
  int K = 0;
  double epsilon = 0.0;
  std::vector<SinkhornTrial> trials;
  bool all_passed() const;
  std::string csv() const;
};

// Each trial passes when the relative cost gap is at most `cost_tol` and the
// marginal violation is below `violation_tol`.
SinkhornCheckReport run_sinkhorn_check(int K, double epsilon, int trials, std::uint64_t seed,
                                       double cost_tol = 0.01, double violation_tol = 1e-6);

}  // namespace rrl
