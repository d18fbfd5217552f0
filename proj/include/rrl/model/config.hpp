#pragma once

#include <vector>

namespace rrl {

/// Toy windowed-attention encoder. Stage s runs depths[s] blocks at
/// embed_dim * 2^s channels; a 2x patch merge sits between stages. Within a
/// stage with shift enabled, odd blocks use windows shifted by window / 2.
struct EncoderConfig {
  int input_size = 56;
  int patch = 2;
  int embed_dim = 16;
  int window = 7;
  std::vector<int> depths{2, 2};
  std::vector<int> heads{2, 4};
  std::vector<bool> shift{true, true};
  double mlp_ratio = 2.0;

  int stages() const { return static_cast<int>(depths.size()); }
  int stage_grid(int stage) const { return (input_size / patch) >> stage; }
  int stage_dim(int stage) const { return embed_dim << stage; }
  int grid_size() const { return stage_grid(stages() - 1); }
  int out_dim() const { return stage_dim(stages() - 1); }
  void validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  int K = 8;
  int refiner_channels = 8;
  int head_hidden = 64;
  int z_dim = 16;

  void validate() const;
};

}  // namespace rrl
