#include "rrl/model/local_features.hpp"

#include <cmath>

#include "rrl/error.hpp"
#include "rrl/numeric/ops.hpp"

namespace rrl {

void init_local_refiner(ParameterSet& params, const ModelConfig& cfg, Rng& rng) {
  const Index d = cfg.encoder.out_dim();
  const Index r = cfg.refiner_channels;
  params.add("local.conv1.w", {3, 3, d, r}, rng.normal_vector(9 * d * r, std::sqrt(2.0 / (9.0 * d))));
  params.add("local.conv1.b", {r}, Vector::Zero(r));
  params.add("local.conv2.w", {3, 3, r, d}, rng.normal_vector(9 * r * d, std::sqrt(2.0 / (9.0 * r))));
  params.add("local.conv2.b", {d}, Vector::Constant(d, 0.01));
}

DiffArray local_features(const ModelConfig& cfg, const BoundParameters& params, const DiffArray& grid,
                         const AttentionMap& attention) {
  const Index g = cfg.encoder.grid_size();
  require(g == kAttentionGrid, "local_features: encoder grid must match the attention grid");
  require(grid.dim() == 2 && grid.rows() == g * g, "local_features: feature grid is not " + std::to_string(g) + "x" +
                                                       std::to_string(g));
  require(attention.K() == cfg.K, "local_features: expected " + std::to_string(cfg.K) + " attention maps");
  const Index d = grid.cols();
  Tape& tape = grid.tape();
  std::vector<DiffArray> rows;
  rows.reserve(static_cast<std::size_t>(cfg.K));
  for (int k = 0; k < cfg.K; ++k) {
    require(attention.maps[static_cast<std::size_t>(k)].rows() == g &&
                attention.maps[static_cast<std::size_t>(k)].cols() == g,
            "local_features: attention map resolution differs from the feature grid");
    const DiffArray gate = tape.constant({g * g}, attention.flat(k));
    DiffArray x = reshape(mul_rows(grid, gate), {g, g, d});
    x = relu(conv2d(x, params["local.conv1.w"], params["local.conv1.b"], 1, 1));
    x = relu(conv2d(x, params["local.conv2.w"], params["local.conv2.b"], 1, 1));
    rows.push_back(reshape(mean_rows(reshape(x, {g * g, d})), {1, d}));
  }
  return concat(rows, 0);
}

}  // namespace rrl
