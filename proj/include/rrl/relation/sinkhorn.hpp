#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "rrl/error.hpp"

namespace rrl {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar = double>
struct TransportPlan {
  DenseMatrix<Scalar> pi;
  bool converged = false;
  int iterations = 0;
  // max_i |row_i - a_i| + max_j |col_j - b_j| of the returned plan.
  Scalar violation = std::numeric_limits<Scalar>::infinity();
  // Violation after every iteration, when requested.
  std::vector<Scalar> history;
};

struct SinkhornOptions {
  double epsilon = 0.05;
  int max_iter = 500;
  double tol = 1e-6;
  bool record_history = false;
};

template <typename Derived, typename Derived2>
auto marginal_violation(const Eigen::MatrixBase<Derived>& pi, const Eigen::MatrixBase<Derived2>& a,
                        const Eigen::MatrixBase<Derived2>& b) {
  return (pi.rowwise().sum() - a).cwiseAbs().maxCoeff() + (pi.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const DenseVector<Scalar>& x) {
  const Scalar mx = x.maxCoeff();
  if (mx == -std::numeric_limits<Scalar>::infinity()) return mx;
  return mx + std::log((x.array() - mx).exp().sum());
}

template <typename Scalar>
DenseVector<Scalar> safe_log(const DenseVector<Scalar>& v) {
  DenseVector<Scalar> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[i] = v[i] > Scalar(0) ? std::log(v[i]) : -std::numeric_limits<Scalar>::infinity();
  }
  return out;
}

}  // namespace detail

/// Entropic optimal transport between distributions a and b under `cost`,
/// by log-domain Sinkhorn-Knopp: potentials f, g alternate
///   f_i = eps log a_i - eps LSE_j((g_j - C_ij) / eps)
///   g_j = eps log b_j - eps LSE_i((f_i - C_ij) / eps)
/// and the plan is exp((f_i + g_j - C_ij) / eps). Stops once the marginal
/// violation drops below tol or after max_iter sweeps.
template <typename Scalar = double>
TransportPlan<Scalar> sinkhorn(const DenseMatrix<Scalar>& cost, const DenseVector<Scalar>& a,
                               const DenseVector<Scalar>& b, const SinkhornOptions& options = {}) {
  require(options.epsilon > 0.0, "sinkhorn: epsilon must be positive");
  require(options.max_iter >= 1, "sinkhorn: max_iter must be at least 1");
  require(cost.rows() == a.size() && cost.cols() == b.size(), "sinkhorn: cost shape does not match marginals");
  require((a.array() >= 0).all() && (b.array() >= 0).all(), "sinkhorn: marginals must be non-negative");
  require(std::abs(a.sum() - Scalar(1)) <= 1e-9 && std::abs(b.sum() - Scalar(1)) <= 1e-9,
          "sinkhorn: marginals must each sum to 1");

  const Scalar eps = static_cast<Scalar>(options.epsilon);
  const Eigen::Index n = a.size(), m = b.size();
  const DenseVector<Scalar> log_a = detail::safe_log(a), log_b = detail::safe_log(b);
  DenseVector<Scalar> f = DenseVector<Scalar>::Zero(n), g = DenseVector<Scalar>::Zero(m);
  DenseVector<Scalar> scratch_row(m), scratch_col(n);

  TransportPlan<Scalar> plan;
  plan.pi.resize(n, m);
  for (int it = 1; it <= options.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (log_a[i] == -std::numeric_limits<Scalar>::infinity()) {
        f[i] = log_a[i];
        continue;
      }
      for (Eigen::Index j = 0; j < m; ++j) scratch_row[j] = (g[j] - cost(i, j)) / eps;
      f[i] = eps * (log_a[i] - detail::log_sum_exp(scratch_row));
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      if (log_b[j] == -std::numeric_limits<Scalar>::infinity()) {
        g[j] = log_b[j];
        continue;
      }
      for (Eigen::Index i = 0; i < n; ++i) scratch_col[i] = (f[i] - cost(i, j)) / eps;
      g[j] = eps * (log_b[j] - detail::log_sum_exp(scratch_col));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) plan.pi(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / eps);
    }
    plan.iterations = it;
    plan.violation = marginal_violation(plan.pi, a, b);
    if (options.record_history) plan.history.push_back(plan.violation);
    if (plan.violation < static_cast<Scalar>(options.tol)) {
      plan.converged = true;
      break;
    }
  }
  return plan;
}

template <typename Scalar>
Scalar transport_cost(const DenseMatrix<Scalar>& plan, const DenseMatrix<Scalar>& cost) {
  return plan.cwiseProduct(cost).sum();
}

}  // namespace rrl
