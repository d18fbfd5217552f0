#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "rrl/io/csv.hpp"
#include "rrl/losses/losses.hpp"
#include "rrl/model/config.hpp"
#include "rrl/pipeline/augment.hpp"
#include "rrl/relation/sinkhorn.hpp"

namespace rrl {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// "key = value" lines; blank lines and '#' comments are skipped.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

bool parse_bool(const std::string& text);

/// Named string accessors onto the fields of a settings struct, used for
/// config files, command-line overrides and the resolved-config echo.
template <typename T>
class OptionTable {
 public:
  using Setter = std::function<void(T&, const std::string&)>;
  using Getter = std::function<std::string(const T&)>;

  void add(std::string key, Setter set, Getter get) {
    entries_.push_back({std::move(key), std::move(set), std::move(get)});
  }
  bool apply(T& target, const std::string& key, const std::string& value) const {
    for (const auto& e : entries_) {
      if (e.key == key) {
        e.set(target, value);
        return true;
      }
    }
    return false;
  }
  bool has(const std::string& key) const {
    for (const auto& e : entries_) {
      if (e.key == key) return true;
    }
    return false;
  }
  std::string echo(const T& source) const {
    std::string out;
    for (const auto& e : entries_) out += e.key + " = " + e.get(source) + "\n";
    return out;
  }

 private:
  struct Entry {
    std::string key;
    Setter set;
    Getter get;
  };
  std::vector<Entry> entries_;
};

// Field accessors return a mutable reference into the settings struct; the
// getters only read through it.
template <typename T, typename Field>
void add_int_option(OptionTable<T>& table, const std::string& key, Field field) {
  table.add(
      key,
      [field](T& c, const std::string& v) {
        field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(io::parse_int(v));
      },
      [field](const T& c) { return std::to_string(field(const_cast<T&>(c))); });
}

template <typename T, typename Field>
void add_double_option(OptionTable<T>& table, const std::string& key, Field field) {
  table.add(
      key, [field](T& c, const std::string& v) { field(c) = io::parse_double(v); },
      [field](const T& c) { return io::format_double(field(const_cast<T&>(c))); });
}

template <typename T, typename Field>
void add_string_option(OptionTable<T>& table, const std::string& key, Field field) {
  table.add(
      key, [field](T& c, const std::string& v) { field(c) = v; },
      [field](const T& c) { return std::string(field(const_cast<T&>(c))); });
}

template <typename T, typename Field>
void add_bool_option(OptionTable<T>& table, const std::string& key, Field field) {
  table.add(
      key, [field](T& c, const std::string& v) { field(c) = parse_bool(v); },
      [field](const T& c) { return std::string(field(const_cast<T&>(c)) ? "true" : "false"); });
}

struct TrainConfig {
  ModelConfig model;
  int batch_size = 16;
  long long steps = 300;
  std::uint64_t seed = 0;
  double lr_scale = 0.05;  // base lr = lr_scale * batch_size / 256
  double wd_start = 0.04;
  double wd_end = 0.4;
  double ema_start = 0.98;
  double ema_end = 1.0;
  LossWeights weights;
  SinkhornOptions sinkhorn;
  // Average the objective over both view orderings.
  bool symmetrize = false;
  AugmentConfig augment;
  int threads = 1;
  long long checkpoint_every = 0;

  void validate() const;
  double base_lr() const;
  // The local branch is skipped entirely when both local weights are zero.
  bool uses_local() const { return weights.alpha_loc != 0.0 || weights.alpha_corr != 0.0; }
};

const OptionTable<TrainConfig>& train_options();

}  // namespace rrl
