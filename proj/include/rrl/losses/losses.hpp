#pragma once

#include "rrl/numeric/tape.hpp"

namespace rrl {

struct LossWeights {
  double alpha_glo = 0.4;
  double alpha_loc = 0.6;
  double alpha_corr = 1.0;

  void validate() const;
};

/// -cos(z2g, q1g), averaged over rows when given [B x z] batches. The target
/// projection z2g is expected to be gradient-stopped by the caller.
DiffArray global_loss(const DiffArray& q1g, const DiffArray& z2g);

/// Per image: -(1/2K) sum_k [cos(q(z1^k), g_xi(t_g)) + cos(g_xi(t_k), q(z1^g))],
/// averaged over the batch. q1k and tk are [B*K x z] sample-major; q1g and tg
/// are [B x z].
DiffArray local_loss(const DiffArray& q1k, const DiffArray& q1g, const DiffArray& tg, const DiffArray& tk, int K);

DiffArray total_loss(const DiffArray& l_glo, const DiffArray& l_loc, const DiffArray& l_corr, const LossWeights& w);

}  // namespace rrl
