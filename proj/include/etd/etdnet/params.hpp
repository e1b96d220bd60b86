#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "etd/etdnet/config.hpp"
#include "etd/numerics/adam.hpp"
#include "etd/numerics/tensor.hpp"

namespace etd::net {

enum class InitKind { Xavier, Zeros, Ones };

struct ParamSpec {
  std::string path;
  Shape shape;
  InitKind init = InitKind::Xavier;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

// Parameter naming. Layers are 1-indexed, sublayers and heads 0-indexed:
//   input/W, input/b
//   layer1/sa/k0/head2/{WQ,WK,WV,a}, layer1/sa/k0/{O,ln_gain,ln_bias}
//   layer1/ha/head0/{WQ,WK,WV}, layer1/ha/{O,ln_gain,ln_bias}   (ha-meanpool: layer1/ha/mean_proj)
//   layer1/fl/{F,ln_gain,ln_bias}   (late-fusion adds layer1/fl_ha/...)
//   late/W, late/b                  (late-fusion only)
//   head/{hidden_W,hidden_b}, head/{speed,dir}_{W,b} or head/{out_W,out_b}
// Blocks a mode never evaluates are not allocated.
std::vector<ParamSpec> param_layout(const ModelConfig& cfg);

std::string sa_path(std::size_t layer, std::size_t k, const std::string& leaf);
std::string sa_head_path(std::size_t layer, std::size_t k, std::size_t r, const std::string& leaf);
std::string ha_path(std::size_t layer, const std::string& leaf);
std::string ha_head_path(std::size_t layer, std::size_t r, const std::string& leaf);
std::string fl_path(std::size_t layer, const std::string& branch, const std::string& leaf);

class EtdnetParams {
 public:
  EtdnetParams() = default;

  // Seeded Xavier-uniform init; each path draws from its own stream.
  static EtdnetParams init(const ModelConfig& cfg, std::uint64_t seed);
  // Tensors must cover the layout exactly (same paths, same shapes).
  static EtdnetParams from_tensors(const ModelConfig& cfg, std::vector<NamedTensor> tensors);

  const Tensor& at(const std::string& path) const;
  bool contains(const std::string& path) const { return index_.count(path) != 0; }

  std::vector<NamedTensor>& named() { return tensors_; }
  const std::vector<NamedTensor>& named() const { return tensors_; }

  std::size_t scalar_count() const;
  void zero_grad();
  // Independent copy with fresh leaf tensors.
  EtdnetParams clone() const;
  // Copy of the tensors `cfg` needs, e.g. the OnlySA part of a Full model.
  EtdnetParams subset(const ModelConfig& cfg) const;

 private:
  void reindex();

  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Throws ConfigError when params do not match the layout of `cfg`.
void check_consistent(const ModelConfig& cfg, const EtdnetParams& params);

}  // namespace etd::net
