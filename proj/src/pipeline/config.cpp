#include "rrl/pipeline/config.hpp"

#include <sstream>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"
#include "rrl/pipeline/schedules.hpp"

namespace rrl {

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(number) + ": expected key = value");
    std::string key = io::trim(line.substr(0, eq));
    require(!key.empty(), "config line " + std::to_string(number) + ": empty key");
    out.emplace_back(std::move(key), io::trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) { return parse_key_values(io::read_file(path)); }

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ContractError("expected a boolean, got '" + text + "'");
}

void TrainConfig::validate() const {
  model.validate();
  require(batch_size >= 2, "batch_size must be at least 2 (batch norm needs two samples)");
  require(steps >= 0, "steps must be non-negative");
  require(lr_scale > 0.0, "lr_scale must be positive");
  require(wd_start >= 0.0 && wd_end >= 0.0, "weight decay must be non-negative");
  require(ema_start >= 0.0 && ema_start <= 1.0 && ema_end >= 0.0 && ema_end <= 1.0, "ema momentum must lie in [0, 1]");
  weights.validate();
  require(sinkhorn.epsilon > 0.0 && sinkhorn.max_iter >= 1 && sinkhorn.tol > 0.0, "sinkhorn settings are invalid");
  augment.validate();
  require(threads >= 1, "threads must be positive");
  require(checkpoint_every >= 0, "checkpoint_every must be non-negative");
}

double TrainConfig::base_lr() const { return scaled_learning_rate(lr_scale, batch_size); }

namespace {

OptionTable<TrainConfig> make_train_options() {
  using C = TrainConfig;
  OptionTable<C> t;
  add_int_option(t, "k", [](C& c) -> int& { return c.model.K; });
  add_int_option(t, "embed_dim", [](C& c) -> int& { return c.model.encoder.embed_dim; });
  add_int_option(t, "refiner_channels", [](C& c) -> int& { return c.model.refiner_channels; });
  add_int_option(t, "head_hidden", [](C& c) -> int& { return c.model.head_hidden; });
  add_int_option(t, "z_dim", [](C& c) -> int& { return c.model.z_dim; });
  add_int_option(t, "batch_size", [](C& c) -> int& { return c.batch_size; });
  add_int_option(t, "steps", [](C& c) -> long long& { return c.steps; });
  add_int_option(t, "seed", [](C& c) -> std::uint64_t& { return c.seed; });
  add_double_option(t, "lr_scale", [](C& c) -> double& { return c.lr_scale; });
  add_double_option(t, "wd_start", [](C& c) -> double& { return c.wd_start; });
  add_double_option(t, "wd_end", [](C& c) -> double& { return c.wd_end; });
  add_double_option(t, "ema_start", [](C& c) -> double& { return c.ema_start; });
  add_double_option(t, "ema_end", [](C& c) -> double& { return c.ema_end; });
  add_double_option(t, "alpha_glo", [](C& c) -> double& { return c.weights.alpha_glo; });
  add_double_option(t, "alpha_loc", [](C& c) -> double& { return c.weights.alpha_loc; });
  add_double_option(t, "alpha_corr", [](C& c) -> double& { return c.weights.alpha_corr; });
  add_double_option(t, "epsilon", [](C& c) -> double& { return c.sinkhorn.epsilon; });
  add_int_option(t, "sinkhorn_max_iter", [](C& c) -> int& { return c.sinkhorn.max_iter; });
  add_double_option(t, "sinkhorn_tol", [](C& c) -> double& { return c.sinkhorn.tol; });
  add_bool_option(t, "symmetrize", [](C& c) -> bool& { return c.symmetrize; });
  add_double_option(t, "flip_p", [](C& c) -> double& { return c.augment.flip_p; });
  add_double_option(t, "jitter_p", [](C& c) -> double& { return c.augment.jitter_p; });
  add_double_option(t, "brightness", [](C& c) -> double& { return c.augment.brightness; });
  add_double_option(t, "contrast", [](C& c) -> double& { return c.augment.contrast; });
  add_double_option(t, "blur_p", [](C& c) -> double& { return c.augment.blur_p; });
  add_double_option(t, "blur_sigma_min", [](C& c) -> double& { return c.augment.blur_sigma_min; });
  add_double_option(t, "blur_sigma_max", [](C& c) -> double& { return c.augment.blur_sigma_max; });
  add_int_option(t, "threads", [](C& c) -> int& { return c.threads; });
  add_int_option(t, "checkpoint_every", [](C& c) -> long long& { return c.checkpoint_every; });
  return t;
}

}  // namespace

const OptionTable<TrainConfig>& train_options() {
  static const OptionTable<TrainConfig> table = make_train_options();
  return table;
}

}  // namespace rrl
