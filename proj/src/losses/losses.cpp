#include "rrl/losses/losses.hpp"

#include <cmath>
#include <vector>

#include "rrl/error.hpp"
#include "rrl/numeric/ops.hpp"

namespace rrl {
namespace {

DiffArray as_rows(const DiffArray& x) { return x.dim() == 2 ? x : reshape(x, {1, x.size()}); }

}  // namespace

void LossWeights::validate() const {
  for (double a : {alpha_glo, alpha_loc, alpha_corr}) {
    require(std::isfinite(a) && a >= 0.0, "loss weights must be finite and non-negative");
  }
}

DiffArray global_loss(const DiffArray& q1g, const DiffArray& z2g) {
  return -mean(cosine_rows(as_rows(z2g), as_rows(q1g)));
}

DiffArray local_loss(const DiffArray& q1k, const DiffArray& q1g, const DiffArray& tg, const DiffArray& tk, int K) {
  require(K > 0, "local_loss: K must be positive");
  const DiffArray q_local = as_rows(q1k), q_global = as_rows(q1g), t_global = as_rows(tg), t_local = as_rows(tk);
  const Index B = q_global.rows();
  require(t_global.rows() == B && q_local.rows() == B * K && t_local.rows() == B * K,
          "local_loss: expected B global rows and B*K local rows");
  std::vector<Index> repeat;
  repeat.reserve(static_cast<std::size_t>(B * K));
  for (Index b = 0; b < B; ++b) {
    for (int k = 0; k < K; ++k) repeat.push_back(b);
  }
  const DiffArray first = cosine_rows(q_local, gather_rows(t_global, repeat));
  const DiffArray second = cosine_rows(t_local, gather_rows(q_global, repeat));
  return scale(sum(first) + sum(second), -1.0 / (2.0 * static_cast<double>(K) * static_cast<double>(B)));
}

DiffArray total_loss(const DiffArray& l_glo, const DiffArray& l_loc, const DiffArray& l_corr, const LossWeights& w) {
  w.validate();
  return scale(l_glo, w.alpha_glo) + scale(l_loc, w.alpha_loc) + scale(l_corr, w.alpha_corr);
}

}  // namespace rrl
