#pragma once

#include <cstdint>
#include <span>

#include "etd/numerics/tensor.hpp"

namespace etd::train {

// Mean over masked nodes of CE(speed) + CE(direction).
Tensor dual_cross_entropy(const Tensor& speed_logits, const Tensor& dir_logits, std::span<const int> speed_targets,
                          std::span<const int> dir_targets, std::span<const std::uint8_t> mask);

// Logit-space BCE averaged over masked nodes; targets in {0, 1}.
Tensor masked_bce(const Tensor& logits, std::span<const double> targets, std::span<const std::uint8_t> mask);

}  // namespace etd::train
