#include "rrl/model/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"

namespace rrl {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "rrl-checkpoint-1";

json to_json(const ModelConfig& c) {
  const EncoderConfig& e = c.encoder;
  std::vector<int> shift;
  for (bool s : e.shift) shift.push_back(s ? 1 : 0);
  return json{{"encoder",
               {{"input_size", e.input_size},
                {"patch", e.patch},
                {"embed_dim", e.embed_dim},
                {"window", e.window},
                {"depths", e.depths},
                {"heads", e.heads},
                {"shift", shift},
                {"mlp_ratio", e.mlp_ratio}}},
              {"K", c.K},
              {"refiner_channels", c.refiner_channels},
              {"head_hidden", c.head_hidden},
              {"z_dim", c.z_dim}};
}

ModelConfig from_json(const json& j) {
  ModelConfig c;
  const json& e = j.at("encoder");
  c.encoder.input_size = e.at("input_size").get<int>();
  c.encoder.patch = e.at("patch").get<int>();
  c.encoder.embed_dim = e.at("embed_dim").get<int>();
  c.encoder.window = e.at("window").get<int>();
  c.encoder.depths = e.at("depths").get<std::vector<int>>();
  c.encoder.heads = e.at("heads").get<std::vector<int>>();
  c.encoder.shift.clear();
  for (int s : e.at("shift").get<std::vector<int>>()) c.encoder.shift.push_back(s != 0);
  c.encoder.mlp_ratio = e.at("mlp_ratio").get<double>();
  c.K = j.at("K").get<int>();
  c.refiner_channels = j.at("refiner_channels").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.z_dim = j.at("z_dim").get<int>();
  c.validate();
  return c;
}

void append_le(std::string& out, const Vector& values) {
  for (Index i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
}

Vector read_le(const std::string& payload, std::size_t offset, Index count) {
  require(offset + static_cast<std::size_t>(count) * 8 <= payload.size(), "checkpoint payload is truncated");
  Vector out(count);
  for (Index i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[offset + static_cast<std::size_t>(i) * 8 + b]))
              << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace

std::string model_config_json(const ModelConfig& config) { return to_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) { return from_json(json::parse(text)); }

void save_checkpoint(const std::filesystem::path& dir, const DualNetworkState& state, std::int64_t step,
                     const std::string& config_echo) {
  std::filesystem::create_directories(dir);
  std::string payload;
  json entries = json::array();
  auto emit = [&](const std::string& name, const Shape& shape, const Vector& value) {
    entries.push_back({{"name", name}, {"shape", shape}, {"offset", payload.size()}, {"count", value.size()}});
    append_le(payload, value);
  };
  for (const Parameter& p : state.theta.items()) emit("theta/" + p.name, p.shape, p.value);
  for (const Parameter& p : state.xi.items()) emit("xi/" + p.name, p.shape, p.value);
  for (const auto& [prefix, buffers] : {std::pair{"online", &state.online_buffers}, std::pair{"target", &state.target_buffers}}) {
    for (const auto& [name, stats] : *buffers) {
      const Index n = stats.running_mean.size();
      emit(std::string("buffer/") + prefix + "/" + name + ".running_mean", {n}, stats.running_mean);
      emit(std::string("buffer/") + prefix + "/" + name + ".running_var", {n}, stats.running_var);
    }
  }
  const json manifest{{"format", kFormat},     {"step", step},   {"ema_m", state.m},
                      {"model", to_json(state.config)},          {"config_echo", config_echo},
                      {"payload", "params.bin"}, {"dtype", "float64-le"}, {"entries", entries}};
  io::write_file_atomic(dir / "params.bin", payload);
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const std::string manifest_text = io::read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::exception& e) {
    throw ContractError((dir / "manifest.json").string() + ": " + e.what());
  }
  require(manifest.value("format", "") == kFormat, (dir / "manifest.json").string() + ": unknown checkpoint format");
  const std::string payload = io::read_file(dir / manifest.at("payload").get<std::string>());

  Checkpoint out;
  out.step = manifest.at("step").get<std::int64_t>();
  out.config_echo = manifest.value("config_echo", "");
  out.state.config = from_json(manifest.at("model"));
  out.state.m = manifest.at("ema_m").get<double>();
  out.state.online_buffers = fresh_head_buffers(out.state.config, true);
  out.state.target_buffers = fresh_head_buffers(out.state.config, false);
  for (const json& entry : manifest.at("entries")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto count = entry.at("count").get<Index>();
    require(shape_size(shape) == count, "checkpoint entry " + name + ": shape does not match count");
    Vector value = read_le(payload, entry.at("offset").get<std::size_t>(), count);
    const auto slash = name.find('/');
    const std::string group = name.substr(0, slash), rest = name.substr(slash + 1);
    if (group == "theta") {
      out.state.theta.add(rest, shape, std::move(value));
    } else if (group == "xi") {
      out.state.xi.add(rest, shape, std::move(value));
    } else if (group == "buffer") {
      const auto slash2 = rest.find('/');
      BufferSet& buffers = rest.substr(0, slash2) == "online" ? out.state.online_buffers : out.state.target_buffers;
      std::string key = rest.substr(slash2 + 1);
      const bool is_mean = key.ends_with(".running_mean");
      key = key.substr(0, key.rfind('.'));
      require(buffers.count(key) != 0, "checkpoint: unexpected buffer " + key);
      (is_mean ? buffers[key].running_mean : buffers[key].running_var) = std::move(value);
    } else {
      throw ContractError("checkpoint: unknown entry group " + group);
    }
  }
  return out;
}

}  // namespace rrl
