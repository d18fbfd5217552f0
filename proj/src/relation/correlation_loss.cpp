#include "rrl/relation/correlation_loss.hpp"

#include "rrl/error.hpp"
#include "rrl/numeric/ops.hpp"

namespace rrl {

DiffArray correlation_loss(const DiffArray& o, const DiffArray& t, const Eigen::MatrixXd& plan) {
  require(o.dim() == 2 && t.dim() == 2 && o.rows() == t.rows() && o.cols() == t.cols(),
          "correlation_loss: o and t must both be K x d");
  const Index K = o.rows();
  require(plan.rows() == K && plan.cols() == K, "correlation_loss: plan must be K x K");
  Vector weights(K * K);
  Eigen::Map<RowMatrix>(weights.data(), K, K) = plan;
  const DiffArray cosines = matmul(l2_normalize(o), transpose(l2_normalize(t)));
  return -sum(cosines * o.tape().constant({K, K}, std::move(weights)));
}

}  // namespace rrl
