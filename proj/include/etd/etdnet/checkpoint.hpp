#pragma once

#include <filesystem>
#include <string>

#include "etd/etdnet/config.hpp"
#include "etd/etdnet/params.hpp"
#include "json.hpp"

namespace etd::net {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  EtdnetParams params;
};

nlohmann::ordered_json checkpoint_to_json(const ModelConfig& cfg, const EtdnetParams& params);
// SchemaError on version mismatch, missing paths or shape disagreement.
Checkpoint checkpoint_from_json(const nlohmann::ordered_json& j);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const EtdnetParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Shortest round-trip JSON text, stable across runs.
std::string dump_json(const nlohmann::ordered_json& j);

}  // namespace etd::net
