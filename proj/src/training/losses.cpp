#include "etd/training/losses.hpp"

#include <vector>

#include "etd/error.hpp"
#include "etd/numerics/ops.hpp"

namespace etd::train {
namespace {

std::vector<std::size_t> masked_rows(std::span<const std::uint8_t> mask, std::size_t n) {
  if (mask.size() != n) {
    throw DimensionError("loss mask has " + std::to_string(mask.size()) + " entries for " + std::to_string(n) + " nodes");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) rows.push_back(i);
  }
  if (rows.empty()) throw EmptyBatchError("loss needs at least one masked node");
  return rows;
}

Tensor class_nll_sum(const Tensor& logits, const std::vector<std::size_t>& rows, std::span<const int> targets,
                     std::size_t classes) {
  if (logits.dim() != 2 || logits.cols() != classes) {
    throw DimensionError("expected logits with " + std::to_string(classes) + " columns, got " +
                         shape_str(logits.shape()));
  }
  std::vector<std::size_t> col;
  col.reserve(rows.size());
  for (auto r : rows) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw ContractError("target class " + std::to_string(t) + " out of range for node " + std::to_string(r));
    }
    col.push_back(static_cast<std::size_t>(t));
  }
  return ops::sum(ops::pick(ops::log_softmax_rows(ops::gather_rows(logits, rows)), col));
}

}  // namespace

Tensor dual_cross_entropy(const Tensor& speed_logits, const Tensor& dir_logits, std::span<const int> speed_targets,
                          std::span<const int> dir_targets, std::span<const std::uint8_t> mask) {
  const std::size_t n = speed_logits.rows();
  if (dir_logits.rows() != n || speed_targets.size() != n || dir_targets.size() != n) {
    throw DimensionError("dual_cross_entropy: logits and targets disagree on the node count");
  }
  auto rows = masked_rows(mask, n);
  Tensor total = ops::add(class_nll_sum(speed_logits, rows, speed_targets, 4),
                          class_nll_sum(dir_logits, rows, dir_targets, 5));
  return ops::scale(total, -1.0 / static_cast<double>(rows.size()));
}

Tensor masked_bce(const Tensor& logits, std::span<const double> targets, std::span<const std::uint8_t> mask) {
  const std::size_t n = logits.numel();
  if (targets.size() != n) throw DimensionError("masked_bce: logits and targets disagree on the node count");
  auto rows = masked_rows(mask, n);
  std::vector<double> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(targets[r]);
  Tensor picked = ops::gather_rows(ops::reshape(logits, {n}), rows);
  return ops::scale(ops::sum(ops::bce_with_logits(picked, y)), 1.0 / static_cast<double>(rows.size()));
}

}  // namespace etd::train
