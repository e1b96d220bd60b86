#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "etd/numerics/tensor.hpp"

namespace etd::ops {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kLayerNormEps = 1e-5;

// Row-major boolean mask; true marks a position that participates.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> keep;
};

// Identifies one dropout site so that the Bernoulli draws depend only on the
// key and the element index, never on evaluation order.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t site = 0;
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a [m x n] + bias [n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
// a [m x n] * w [m] (or [m x 1]) broadcast over columns.
Tensor mul_col(const Tensor& a, const Tensor& w);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
Tensor sigmoid(const Tensor& x);
Tensor dropout(const Tensor& x, double p, const DropoutKey& key, bool training);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// out[index[i]] += a[i]; rows never written stay zero.
Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index, std::size_t n_rows);

// Softmax along the last axis of a 2-D tensor. Masked entries get exactly 0.
Tensor softmax_rows(const Tensor& x, const std::optional<Mask>& mask = std::nullopt);
// Softmax of a score vector [E] (or [E x 1]) within groups given by segment[e].
// Empty segments produce no entries.
Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment,
                       std::size_t n_segments);
Tensor log_softmax_rows(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
// out[i] = x[i, column[i]]
Tensor pick(const Tensor& x, std::span<const std::size_t> column);
// Elementwise stable binary cross-entropy on logits; targets in {0, 1}.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

Tensor reshape(const Tensor& x, Shape shape);
// Identity forward; backward multiplies the incoming gradient by `factor`.
Tensor scale_grad(const Tensor& x, double factor);

}  // namespace etd::ops
