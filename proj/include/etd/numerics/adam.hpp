#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etd/numerics/tensor.hpp"

namespace etd {

struct NamedTensor {
  std::string path;
  Tensor tensor;
};

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers keyed by parameter position; the parameter list passed to
/// every step must keep the same order and shapes.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

// Decoupled weight decay (p *= 1 - lr*wd) followed by the bias-corrected Adam
// update. Parameters without a gradient buffer are treated as zero-gradient.
void adam_step(std::vector<NamedTensor>& params, AdamState& state);

}  // namespace etd
