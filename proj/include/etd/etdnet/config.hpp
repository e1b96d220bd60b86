#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "json.hpp"

namespace etd::net {

enum class Mode { Full, OnlySA, OnlyHA, LateFusion, HAMeanPool };
enum class HeadKind { DualClass, Binary };

std::string_view to_string(Mode m);
std::string_view to_string(HeadKind h);
Mode parse_mode(std::string_view s);
HeadKind parse_head(std::string_view s);

struct ModelConfig {
  std::size_t d = 128;          // embedding width
  std::size_t d_in = 14;        // input feature width
  std::size_t layers = 3;       // L
  std::size_t sa_heads = 4;     // H_s
  std::size_t sa_sublayers = 2; // K_s
  std::size_t ha_heads = 2;     // H_t
  std::size_t window = 8;       // B
  double dropout = 0.1;
  double leaky_slope = 0.2;
  Mode mode = Mode::Full;
  HeadKind head = HeadKind::DualClass;

  std::size_t sa_head_dim() const { return d / sa_heads; }
  std::size_t ha_head_dim() const { return d / ha_heads; }

  bool uses_sa() const { return mode != Mode::OnlyHA; }
  bool uses_ha() const { return mode != Mode::OnlySA; }

  // Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
// Fields absent from `j` keep the values already in `base`.
ModelConfig model_config_from_json(const nlohmann::ordered_json& j, ModelConfig base = {});

}  // namespace etd::net
