#include "rrl/model/encoder.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "rrl/error.hpp"
#include "rrl/numeric/ops.hpp"

namespace rrl {

void EncoderConfig::validate() const {
  require(input_size > 0 && patch > 0 && input_size % patch == 0, "encoder: input_size must be a multiple of patch");
  require(embed_dim > 0 && window > 0, "encoder: embed_dim and window must be positive");
  require(!depths.empty() && depths.size() == heads.size() && depths.size() == shift.size(),
          "encoder: depths, heads and shift need one entry per stage");
  for (int s = 0; s < stages(); ++s) {
    require(depths[s] > 0 && heads[s] > 0, "encoder: depths and heads must be positive");
    require(stage_dim(s) % heads[s] == 0, "encoder: stage width must divide evenly among heads");
    require(stage_grid(s) > 0 && stage_grid(s) % window == 0, "encoder: stage grid must be a multiple of the window");
    if (s + 1 < stages()) require(stage_grid(s) % 2 == 0, "encoder: merged stage grid must be even");
  }
  require(mlp_ratio > 0.0, "encoder: mlp_ratio must be positive");
}

std::string block_prefix(int stage, int block) {
  return "encoder.s" + std::to_string(stage) + ".b" + std::to_string(block) + ".";
}

namespace {

Vector lecun(Rng& rng, Index fan_in, Index count) {
  return rng.normal_vector(count, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

void add_linear(ParameterSet& params, const std::string& name, Index in, Index out, Rng& rng, bool bias = true) {
  params.add(name + ".w", {in, out}, lecun(rng, in, in * out));
  if (bias) params.add(name + ".b", {out}, Vector::Zero(out));
}

void add_norm(ParameterSet& params, const std::string& name, Index dim) {
  params.add(name + ".g", {dim}, Vector::Ones(dim));
  params.add(name + ".b", {dim}, Vector::Zero(dim));
}

DiffArray linear(const DiffArray& x, const BoundParameters& p, const std::string& name) {
  const DiffArray y = matmul(x, p[name + ".w"]);
  return p.contains(name + ".b") ? add_row(y, p[name + ".b"]) : y;
}

DiffArray norm(const DiffArray& x, const BoundParameters& p, const std::string& name) {
  return layer_norm(x, p[name + ".g"], p[name + ".b"]);
}

WindowLayout make_layout(int grid, int window, int shift, int heads) {
  WindowLayout layout{grid, window, shift, {}, {}, {}, {}};
  const int per_row = grid / window;
  const int area = window * window;
  const auto n = static_cast<std::size_t>(grid * grid);
  layout.perm.resize(n);
  layout.inverse.resize(n);
  std::vector<int> region(n);
  for (int wr = 0; wr < per_row; ++wr) {
    for (int wc = 0; wc < per_row; ++wc) {
      for (int r = 0; r < window; ++r) {
        for (int c = 0; c < window; ++c) {
          const int i = wr * window + r, j = wc * window + c;  // shifted coordinates
          const auto p = static_cast<std::size_t>((wr * per_row + wc) * area + r * window + c);
          const int src = ((i + shift) % grid) * grid + (j + shift) % grid;
          layout.perm[p] = src;
          layout.inverse[static_cast<std::size_t>(src)] = static_cast<Index>(p);
          auto band = [&](int v) { return v < grid - window ? 0 : (v < grid - shift ? 1 : 2); };
          region[p] = band(i) * 3 + band(j);
        }
      }
    }
  }
  if (shift > 0) {
    for (int w = 0; w < per_row * per_row; ++w) {
      Vector mask(area * area);
      for (int q = 0; q < area; ++q) {
        for (int k = 0; k < area; ++k) {
          mask[q * area + k] = region[static_cast<std::size_t>(w * area + q)] ==
                                       region[static_cast<std::size_t>(w * area + k)]
                                   ? 0.0
                                   : -100.0;
        }
      }
      layout.masks.push_back(std::move(mask));
    }
  }
  const int span = 2 * window - 1;
  layout.relative_index.assign(static_cast<std::size_t>(heads), std::vector<Index>(static_cast<std::size_t>(area * area)));
  for (int q = 0; q < area; ++q) {
    for (int k = 0; k < area; ++k) {
      const int dy = q / window - k / window + window - 1;
      const int dx = q % window - k % window + window - 1;
      for (int h = 0; h < heads; ++h) {
        layout.relative_index[static_cast<std::size_t>(h)][static_cast<std::size_t>(q * area + k)] =
            (dy * span + dx) * heads + h;
      }
    }
  }
  return layout;
}

}  // namespace

const WindowLayout& window_layout(int grid, int window, int shift, int heads) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int, int>, std::unique_ptr<WindowLayout>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[{grid, window, shift, heads}];
  if (!slot) slot = std::make_unique<WindowLayout>(make_layout(grid, window, shift, heads));
  return *slot;
}

void init_encoder(ParameterSet& params, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index c0 = cfg.embed_dim;
  add_linear(params, "encoder.embed", cfg.patch * cfg.patch, c0, rng);
  add_norm(params, "encoder.embed_norm", c0);
  const int span = 2 * cfg.window - 1;
  for (int s = 0; s < cfg.stages(); ++s) {
    const Index c = cfg.stage_dim(s);
    const auto hidden = static_cast<Index>(std::lround(cfg.mlp_ratio * static_cast<double>(c)));
    if (s > 0) {
      const std::string merge = "encoder.merge" + std::to_string(s);
      add_norm(params, merge + ".norm", 2 * c);
      add_linear(params, merge, 2 * c, c, rng, false);
    }
    for (int b = 0; b < cfg.depths[s]; ++b) {
      const std::string p = block_prefix(s, b);
      add_norm(params, p + "norm1", c);
      add_linear(params, p + "qkv", c, 3 * c, rng);
      params.add(p + "rel_bias", {span * span, cfg.heads[s]}, rng.normal_vector(span * span * cfg.heads[s], 0.02));
      add_linear(params, p + "proj", c, c, rng);
      add_norm(params, p + "norm2", c);
      add_linear(params, p + "fc1", c, hidden, rng);
      add_linear(params, p + "fc2", hidden, c, rng);
    }
  }
  add_norm(params, "encoder.norm", cfg.out_dim());
}

DiffArray swin_block(const DiffArray& x, int grid, int window, int heads, int shift, const BoundParameters& params,
                     const std::string& prefix) {
  const Index dim = x.cols();
  require(x.rows() == static_cast<Index>(grid) * grid, "swin_block: token count does not match grid");
  const WindowLayout& layout = window_layout(grid, window, shift, heads);
  const Index area = static_cast<Index>(window) * window;
  const Index windows = x.rows() / area;
  const Index head_dim = dim / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tape& tape = x.tape();

  const DiffArray normed = gather_rows(norm(x, params, prefix + "norm1"), layout.perm);
  const DiffArray qkv = linear(normed, params, prefix + "qkv");

  std::vector<DiffArray> biases;
  for (int h = 0; h < heads; ++h) {
    biases.push_back(gather(params[prefix + "rel_bias"], layout.relative_index[static_cast<std::size_t>(h)],
                            {area, area}));
  }
  std::vector<DiffArray> mask_arrays;
  for (const Vector& m : layout.masks) mask_arrays.push_back(tape.constant({area, area}, m));

  std::vector<DiffArray> window_outputs;
  window_outputs.reserve(static_cast<std::size_t>(windows));
  for (Index w = 0; w < windows; ++w) {
    std::vector<DiffArray> head_outputs;
    for (int h = 0; h < heads; ++h) {
      const DiffArray q = block(qkv, w * area, h * head_dim, area, head_dim);
      const DiffArray k = block(qkv, w * area, dim + h * head_dim, area, head_dim);
      const DiffArray v = block(qkv, w * area, 2 * dim + h * head_dim, area, head_dim);
      DiffArray scores = scale(matmul(q, transpose(k)), scale_factor) + biases[static_cast<std::size_t>(h)];
      if (!mask_arrays.empty()) scores = scores + mask_arrays[static_cast<std::size_t>(w)];
      head_outputs.push_back(matmul(softmax(scores, 1), v));
    }
    window_outputs.push_back(concat(head_outputs, 1));
  }
  const DiffArray attended = linear(concat(window_outputs, 0), params, prefix + "proj");
  const DiffArray x1 = x + gather_rows(attended, layout.inverse);
  const DiffArray hidden = gelu(linear(norm(x1, params, prefix + "norm2"), params, prefix + "fc1"));
  return x1 + linear(hidden, params, prefix + "fc2");
}

DiffArray patch_merge(const DiffArray& x, int grid, const BoundParameters& params, const std::string& prefix) {
  require(x.rows() == static_cast<Index>(grid) * grid && grid % 2 == 0, "patch_merge: bad grid");
  const int half = grid / 2;
  std::vector<DiffArray> parts;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      std::vector<Index> rows;
      rows.reserve(static_cast<std::size_t>(half * half));
      for (int r = 0; r < half; ++r) {
        for (int c = 0; c < half; ++c) rows.push_back((2 * r + dy) * grid + 2 * c + dx);
      }
      parts.push_back(gather_rows(x, rows));
    }
  }
  return linear(norm(concat(parts, 1), params, prefix + ".norm"), params, prefix);
}

EncoderOutput encode(const EncoderConfig& cfg, const BoundParameters& params, Tape& tape, const Image& image) {
  require(image.rows() == cfg.input_size && image.cols() == cfg.input_size,
          "encode: image is " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) + ", expected " +
              std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size));
  const int p = cfg.patch;
  const int g0 = cfg.stage_grid(0);
  Vector patches(static_cast<Index>(g0) * g0 * p * p);
  for (int r = 0; r < g0; ++r) {
    for (int c = 0; c < g0; ++c) {
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) patches[((r * g0 + c) * p + y) * p + x] = image(r * p + y, c * p + x);
      }
    }
  }
  DiffArray tokens = linear(tape.constant({static_cast<Index>(g0) * g0, p * p}, std::move(patches)), params,
                            "encoder.embed");
  tokens = norm(tokens, params, "encoder.embed_norm");
  for (int s = 0; s < cfg.stages(); ++s) {
    const int grid = cfg.stage_grid(s);
    if (s > 0) tokens = patch_merge(tokens, cfg.stage_grid(s - 1), params, "encoder.merge" + std::to_string(s));
    // Shifting is pointless once a single window covers the grid.
    const bool shift_stage = cfg.shift[static_cast<std::size_t>(s)] && grid > cfg.window;
    for (int b = 0; b < cfg.depths[s]; ++b) {
      const int shift = shift_stage && b % 2 == 1 ? cfg.window / 2 : 0;
      tokens = swin_block(tokens, grid, cfg.window, cfg.heads[s], shift, params, block_prefix(s, b));
    }
  }
  tokens = norm(tokens, params, "encoder.norm");
  return {tokens, mean_rows(tokens)};
}

}  // namespace rrl
