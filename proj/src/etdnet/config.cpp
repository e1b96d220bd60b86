#include "etd/etdnet/config.hpp"

#include "etd/error.hpp"

namespace etd::net {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::OnlySA: return "only-sa";
    case Mode::OnlyHA: return "only-ha";
    case Mode::LateFusion: return "late-fusion";
    case Mode::HAMeanPool: return "ha-meanpool";
  }
  return "full";
}

std::string_view to_string(HeadKind h) { return h == HeadKind::DualClass ? "dual" : "binary"; }

Mode parse_mode(std::string_view s) {
  for (auto m : {Mode::Full, Mode::OnlySA, Mode::OnlyHA, Mode::LateFusion, Mode::HAMeanPool}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("mode: unknown value '" + std::string(s) + "'");
}

HeadKind parse_head(std::string_view s) {
  if (s == "dual") return HeadKind::DualClass;
  if (s == "binary") return HeadKind::Binary;
  throw ConfigError("head: unknown value '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(std::string(field) + " must be positive");
  };
  positive(d, "d");
  positive(d_in, "d_in");
  positive(sa_heads, "sa_heads");
  positive(sa_sublayers, "sa_sublayers");
  positive(ha_heads, "ha_heads");
  positive(window, "window");
  if (d % sa_heads != 0) throw ConfigError("sa_heads: d=" + std::to_string(d) + " is not divisible by it");
  if (d % ha_heads != 0) throw ConfigError("ha_heads: d=" + std::to_string(d) + " is not divisible by it");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(leaky_slope >= 0.0)) throw ConfigError("leaky_slope must be non-negative");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d"] = c.d;
  j["d_in"] = c.d_in;
  j["layers"] = c.layers;
  j["sa_heads"] = c.sa_heads;
  j["sa_sublayers"] = c.sa_sublayers;
  j["ha_heads"] = c.ha_heads;
  j["window"] = c.window;
  j["dropout"] = c.dropout;
  j["leaky_slope"] = c.leaky_slope;
  j["mode"] = std::string(to_string(c.mode));
  j["head"] = std::string(to_string(c.head));
  return j;
}

ModelConfig model_config_from_json(const nlohmann::ordered_json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  auto read_size = [&](const char* key, std::size_t& out) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number_unsigned()) throw ConfigError(std::string(key) + " must be a non-negative integer");
      out = it->get<std::size_t>();
    }
  };
  auto read_double = [&](const char* key, double& out) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) throw ConfigError(std::string(key) + " must be a number");
      out = it->get<double>();
    }
  };
  read_size("d", c.d);
  read_size("d_in", c.d_in);
  read_size("layers", c.layers);
  read_size("sa_heads", c.sa_heads);
  read_size("sa_sublayers", c.sa_sublayers);
  read_size("ha_heads", c.ha_heads);
  read_size("window", c.window);
  read_double("dropout", c.dropout);
  read_double("leaky_slope", c.leaky_slope);
  if (auto it = j.find("mode"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("mode must be a string");
    c.mode = parse_mode(it->get<std::string>());
  }
  if (auto it = j.find("head"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("head must be a string");
    c.head = parse_head(it->get<std::string>());
  }
  return c;
}

}  // namespace etd::net
