#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "rrl/error.hpp"
#include "rrl/relation/sinkhorn.hpp"

namespace rrl {

inline constexpr int kLpOracleMaxK = 4;

template <typename Scalar = double>
struct ExactTransport {
  DenseMatrix<Scalar> plan;
  Scalar cost = std::numeric_limits<Scalar>::infinity();
  int vertices_checked = 0;
};

/// Exact optimal transport for K <= 4 by enumerating every basic feasible
/// solution of the transportation polytope: each choice of 2K-1 cells whose
/// row/column constraint system has full rank and a non-negative solution is a
/// vertex, and the optimum of a linear cost is attained at one of them.
template <typename Scalar = double>
ExactTransport<Scalar> lp_oracle(const DenseMatrix<Scalar>& cost, const DenseVector<Scalar>& a,
                                 const DenseVector<Scalar>& b) {
  const Eigen::Index K = a.size();
  require(K >= 1 && b.size() == K && cost.rows() == K && cost.cols() == K, "lp_oracle: shape mismatch");
  require(K <= kLpOracleMaxK, "lp_oracle: K > 4 is refused (vertex enumeration grows combinatorially)");
  require(std::abs(a.sum() - b.sum()) <= 1e-9, "lp_oracle: marginals must have equal mass");

  const Eigen::Index cells = K * K;
  const Eigen::Index basis = 2 * K - 1;
  DenseMatrix<Scalar> A(2 * K, basis);
  DenseVector<Scalar> rhs(2 * K);
  rhs << a, b;

  ExactTransport<Scalar> best;
  best.plan = DenseMatrix<Scalar>::Zero(K, K);
  std::vector<Eigen::Index> chosen(static_cast<std::size_t>(basis));
  for (Eigen::Index i = 0; i < basis; ++i) chosen[static_cast<std::size_t>(i)] = i;

  const Scalar tol = Scalar(1e-10);
  while (true) {
    A.setZero();
    for (Eigen::Index col = 0; col < basis; ++col) {
      const Eigen::Index cell = chosen[static_cast<std::size_t>(col)];
      A(cell / K, col) = 1;
      A(K + cell % K, col) = 1;
    }
    Eigen::FullPivLU<DenseMatrix<Scalar>> lu(A);
    lu.setThreshold(1e-9);
    if (lu.rank() == basis) {
      const DenseVector<Scalar> x = lu.solve(rhs);
      if ((A * x - rhs).cwiseAbs().maxCoeff() <= tol && x.minCoeff() >= -tol) {
        ++best.vertices_checked;
        DenseMatrix<Scalar> plan = DenseMatrix<Scalar>::Zero(K, K);
        for (Eigen::Index col = 0; col < basis; ++col) {
          const Eigen::Index cell = chosen[static_cast<std::size_t>(col)];
          plan(cell / K, cell % K) = std::max(x[col], Scalar(0));
        }
        const Scalar value = plan.cwiseProduct(cost).sum();
        if (value < best.cost) {
          best.cost = value;
          best.plan = plan;
        }
      }
    }
    // Next combination in lexicographic order.
    Eigen::Index pos = basis - 1;
    while (pos >= 0 && chosen[static_cast<std::size_t>(pos)] == cells - basis + pos) --pos;
    if (pos < 0) break;
    ++chosen[static_cast<std::size_t>(pos)];
    for (Eigen::Index k = pos + 1; k < basis; ++k) {
      chosen[static_cast<std::size_t>(k)] = chosen[static_cast<std::size_t>(k - 1)] + 1;
    }
  }
  require(best.vertices_checked > 0, "lp_oracle: no feasible vertex found");
  return best;
}

}  // namespace rrl
