#include "etd/etdnet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "etd/error.hpp"

namespace etd::net {

using Json = nlohmann::ordered_json;

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json checkpoint_to_json(const ModelConfig& cfg, const EtdnetParams& params) {
  Json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = to_json(cfg);
  Json ps = Json::object();
  for (const auto& [path, t] : params.named()) {
    Json entry;
    entry["shape"] = t.shape();
    auto data = t.data();
    entry["data"] = std::vector<double>(data.begin(), data.end());
    ps[path] = std::move(entry);
  }
  j["params"] = std::move(ps);
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("format_version")) throw SchemaError("checkpoint: missing format_version");
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kCheckpointVersion) {
    throw SchemaError("checkpoint: format_version " + j["format_version"].dump() + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  if (!j.contains("config") || !j.contains("params") || !j["params"].is_object()) {
    throw SchemaError("checkpoint: missing config or params");
  }
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(j["config"]);
    cfg.validate();
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("checkpoint config: ") + e.what());
  }
  std::vector<NamedTensor> tensors;
  for (const auto& [path, entry] : j["params"].items()) {
    try {
      auto shape = entry.at("shape").get<Shape>();
      auto data = entry.at("data").get<std::vector<double>>();
      if (shape.empty() || shape_numel(shape) != data.size()) {
        throw SchemaError("checkpoint param " + path + ": shape and data length disagree");
      }
      tensors.push_back({path, Tensor::from(shape, std::move(data), true)});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("checkpoint param " + path + ": " + e.what());
    }
  }
  try {
    return {cfg, EtdnetParams::from_tensors(cfg, std::move(tensors))};
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const EtdnetParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << dump_json(checkpoint_to_json(cfg, params));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace etd::net
