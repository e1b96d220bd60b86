#include "etd/etdnet/params.hpp"

#include <algorithm>
#include <cmath>

#include "etd/error.hpp"
#include "etd/fhgraph/graph.hpp"
#include "etd/numerics/rng.hpp"

namespace etd::net {

std::string sa_path(std::size_t layer, std::size_t k, const std::string& leaf) {
  return "layer" + std::to_string(layer) + "/sa/k" + std::to_string(k) + "/" + leaf;
}

std::string sa_head_path(std::size_t layer, std::size_t k, std::size_t r, const std::string& leaf) {
  return sa_path(layer, k, "head" + std::to_string(r) + "/" + leaf);
}

std::string ha_path(std::size_t layer, const std::string& leaf) {
  return "layer" + std::to_string(layer) + "/ha/" + leaf;
}

std::string ha_head_path(std::size_t layer, std::size_t r, const std::string& leaf) {
  return ha_path(layer, "head" + std::to_string(r) + "/" + leaf);
}

std::string fl_path(std::size_t layer, const std::string& branch, const std::string& leaf) {
  return "layer" + std::to_string(layer) + "/" + branch + "/" + leaf;
}

std::vector<ParamSpec> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d;
  std::vector<ParamSpec> out;
  auto matrix = [&](std::string path, std::size_t rows, std::size_t cols) {
    // stored [out x in] and applied as x * W^T
    out.push_back({std::move(path), {rows, cols}, InitKind::Xavier, cols, rows});
  };
  auto vec = [&](std::string path, std::size_t n, InitKind kind) {
    out.push_back({std::move(path), {n}, kind, 0, 0});
  };
  auto layer_norm = [&](const std::string& gain, const std::string& bias) {
    vec(gain, d, InitKind::Ones);
    vec(bias, d, InitKind::Zeros);
  };

  matrix("input/W", d, cfg.d_in);
  vec("input/b", d, InitKind::Zeros);

  const std::size_t ds = cfg.sa_head_dim();
  const std::size_t dh = cfg.ha_head_dim();
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    if (cfg.uses_sa()) {
      for (std::size_t k = 0; k < cfg.sa_sublayers; ++k) {
        for (std::size_t r = 0; r < cfg.sa_heads; ++r) {
          matrix(sa_head_path(l, k, r, "WQ"), ds, d);
          matrix(sa_head_path(l, k, r, "WK"), ds, d);
          matrix(sa_head_path(l, k, r, "WV"), ds, d);
          out.push_back({sa_head_path(l, k, r, "a"), {2 * ds}, InitKind::Xavier, 2 * ds, 1});
        }
        matrix(sa_path(l, k, "O"), d, d);
        layer_norm(sa_path(l, k, "ln_gain"), sa_path(l, k, "ln_bias"));
      }
    }
    if (cfg.mode == Mode::HAMeanPool) {
      matrix(ha_path(l, "mean_proj"), d, d);
      layer_norm(ha_path(l, "ln_gain"), ha_path(l, "ln_bias"));
    } else if (cfg.uses_ha()) {
      for (std::size_t r = 0; r < cfg.ha_heads; ++r) {
        matrix(ha_head_path(l, r, "WQ"), dh, d);
        matrix(ha_head_path(l, r, "WK"), dh, d);
        matrix(ha_head_path(l, r, "WV"), dh, d);
      }
      // O_tau is applied as row * O, so its shape is [H_t d'' x d].
      out.push_back({ha_path(l, "O"), {cfg.ha_heads * dh, d}, InitKind::Xavier, cfg.ha_heads * dh, d});
      layer_norm(ha_path(l, "ln_gain"), ha_path(l, "ln_bias"));
    }
    matrix(fl_path(l, "fl", "F"), d, 3 * d);
    layer_norm(fl_path(l, "fl", "ln_gain"), fl_path(l, "fl", "ln_bias"));
    if (cfg.mode == Mode::LateFusion) {
      matrix(fl_path(l, "fl_ha", "F"), d, 3 * d);
      layer_norm(fl_path(l, "fl_ha", "ln_gain"), fl_path(l, "fl_ha", "ln_bias"));
    }
  }
  if (cfg.mode == Mode::LateFusion) {
    matrix("late/W", d, 2 * d);
    vec("late/b", d, InitKind::Zeros);
  }

  matrix("head/hidden_W", d, d);
  vec("head/hidden_b", d, InitKind::Zeros);
  if (cfg.head == HeadKind::DualClass) {
    matrix("head/speed_W", static_cast<std::size_t>(fhg::kSpeedClasses), d);
    vec("head/speed_b", static_cast<std::size_t>(fhg::kSpeedClasses), InitKind::Zeros);
    matrix("head/dir_W", static_cast<std::size_t>(fhg::kDirectionClasses), d);
    vec("head/dir_b", static_cast<std::size_t>(fhg::kDirectionClasses), InitKind::Zeros);
  } else {
    matrix("head/out_W", 1, d);
    vec("head/out_b", 1, InitKind::Zeros);
  }
  return out;
}

namespace {

// FNV-1a; std::hash is not stable across standard libraries.
std::uint64_t path_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

EtdnetParams EtdnetParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  EtdnetParams p;
  for (const auto& spec : param_layout(cfg)) {
    // Per-path streams: a tensor gets the same values in every mode that has it.
    Rng rng(hash_combine(seed, path_hash(spec.path)));
    std::vector<double> data(shape_numel(spec.shape));
    switch (spec.init) {
      case InitKind::Zeros: break;
      case InitKind::Ones: std::fill(data.begin(), data.end(), 1.0); break;
      case InitKind::Xavier: {
        const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
        for (auto& v : data) v = rng.uniform(-bound, bound);
        break;
      }
    }
    p.tensors_.push_back({spec.path, Tensor::from(spec.shape, std::move(data), true)});
  }
  p.reindex();
  return p;
}

EtdnetParams EtdnetParams::from_tensors(const ModelConfig& cfg, std::vector<NamedTensor> tensors) {
  EtdnetParams p;
  p.tensors_ = std::move(tensors);
  p.reindex();
  check_consistent(cfg, p);
  // Keep layout order so optimizer state lines up regardless of input order.
  std::vector<NamedTensor> ordered;
  for (const auto& spec : param_layout(cfg)) ordered.push_back(p.tensors_[p.index_.at(spec.path)]);
  p.tensors_ = std::move(ordered);
  p.reindex();
  return p;
}

void EtdnetParams::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!index_.emplace(tensors_[i].path, i).second) {
      throw ConfigError("duplicate parameter path " + tensors_[i].path);
    }
  }
}

const Tensor& EtdnetParams::at(const std::string& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) throw ConfigError("missing parameter " + path);
  return tensors_[it->second].tensor;
}

std::size_t EtdnetParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.tensor.numel();
  return n;
}

void EtdnetParams::zero_grad() {
  for (auto& t : tensors_) t.tensor.zero_grad();
}

EtdnetParams EtdnetParams::clone() const {
  EtdnetParams p;
  for (const auto& t : tensors_) {
    auto data = t.tensor.data();
    p.tensors_.push_back({t.path, Tensor::from(t.tensor.shape(), {data.begin(), data.end()}, true)});
  }
  p.reindex();
  return p;
}

EtdnetParams EtdnetParams::subset(const ModelConfig& cfg) const {
  std::vector<NamedTensor> picked;
  for (const auto& spec : param_layout(cfg)) {
    const auto& t = at(spec.path);
    auto data = t.data();
    picked.push_back({spec.path, Tensor::from(t.shape(), {data.begin(), data.end()}, true)});
  }
  return from_tensors(cfg, std::move(picked));
}

void check_consistent(const ModelConfig& cfg, const EtdnetParams& params) {
  const auto layout = param_layout(cfg);
  for (const auto& spec : layout) {
    if (!params.contains(spec.path)) throw ConfigError("parameter " + spec.path + " missing for this config");
    const auto& shape = params.at(spec.path).shape();
    if (shape != spec.shape) {
      throw ConfigError("parameter " + spec.path + " has shape " + shape_str(shape) + ", config expects " +
                        shape_str(spec.shape));
    }
  }
  if (params.named().size() != layout.size()) {
    throw ConfigError("parameter set has " + std::to_string(params.named().size()) + " tensors, config expects " +
                      std::to_string(layout.size()));
  }
}

}  // namespace etd::net
