#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rrl/model/config.hpp"
#include "rrl/model/parameters.hpp"
#include "rrl/numeric/random.hpp"

namespace rrl {

// Grayscale image, rows along y, values in [0, 1].
using Image = Eigen::MatrixXd;

struct EncoderOutput {
  DiffArray grid;    // [grid*grid x out_dim], tokens row-major over the grid
  DiffArray global;  // [out_dim], mean over grid tokens
};

/// Token order and masks for (shifted) window attention on a square grid.
struct WindowLayout {
  int grid = 0;
  int window = 0;
  int shift = 0;
  // perm[p] = source token for window-ordered position p; inverse undoes it.
  std::vector<Index> perm;
  std::vector<Index> inverse;
  // Per window, additive [window^2 x window^2] mask (0 or -100); empty when
  // the shift is zero.
  std::vector<Vector> masks;
  // Flat index into a [(2w-1)^2 x heads] bias table, per (query, key) pair
  // and head: relative_index[h][q * w^2 + k].
  std::vector<std::vector<Index>> relative_index;
};

const WindowLayout& window_layout(int grid, int window, int shift, int heads);

void init_encoder(ParameterSet& params, const EncoderConfig& cfg, Rng& rng);

/// One transformer block with (shifted) window self-attention and an MLP,
/// both pre-normalized and residual. x is [grid*grid x dim].
DiffArray swin_block(const DiffArray& x, int grid, int window, int heads, int shift, const BoundParameters& params,
                     const std::string& prefix);

// Patch merge: 2x2 neighbouring tokens concatenated, normalized and projected
// to twice the channels. [g*g x c] -> [(g/2)^2 x 2c].
DiffArray patch_merge(const DiffArray& x, int grid, const BoundParameters& params, const std::string& prefix);

EncoderOutput encode(const EncoderConfig& cfg, const BoundParameters& params, Tape& tape, const Image& image);

// Parameter names of block `block` in stage `stage`.
std::string block_prefix(int stage, int block);

}  // namespace rrl
