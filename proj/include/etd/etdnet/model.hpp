#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etd/etdnet/config.hpp"
#include "etd/etdnet/params.hpp"
#include "etd/fhgraph/graph.hpp"
#include "etd/numerics/tensor.hpp"

namespace etd::net {

// Index arrays derived once per graph and window, reused across epochs.
struct GraphPlan {
  std::size_t n_nodes = 0;
  std::size_t window = 0;
  Tensor features;  // [N x d_in], constant

  // Intra edges as messages src -> dst; attention normalizes over dst.
  std::vector<std::size_t> intra_src;
  std::vector<std::size_t> intra_dst;

  // Dynamic nodes with m >= 1 predecessors, in node order.
  std::vector<std::size_t> ha_target;
  std::vector<std::size_t> ha_query;  // most recent predecessor (row m-1)
  std::vector<std::size_t> ha_count;  // m
  // Flattened (target slot, predecessor) pairs, time-ascending per slot.
  std::vector<std::size_t> pair_slot;
  std::vector<std::size_t> pair_node;
};

GraphPlan make_plan(const fhg::FullHistoryGraph& g, std::size_t window);

struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t stream = 0;  // distinguishes units within an epoch
};

struct ModelOutput {
  Tensor embedding;  // h^(L), [N x d] (after the 2d->d merge in late-fusion)
  Tensor speed;      // [N x 4]
  Tensor dir;        // [N x 5]
  Tensor binary;     // [N]
};

// SA weights per (layer, sublayer, head), each [|D|] aligned with intra_src.
struct AttentionTrace {
  std::vector<Tensor> sa_alpha;
};

Tensor linear(const Tensor& x, const Tensor& w);

// m^D for layer `layer` (1-indexed).
Tensor step_attention(const GraphPlan& plan, const Tensor& h, const EtdnetParams& p, const ModelConfig& cfg,
                      std::size_t layer, AttentionTrace* trace = nullptr);
// m^H; zero rows for static nodes and nodes without predecessors.
Tensor history_attention(const GraphPlan& plan, const Tensor& h, const EtdnetParams& p, const ModelConfig& cfg,
                         std::size_t layer);
Tensor history_mean_pool(const GraphPlan& plan, const Tensor& h, const EtdnetParams& p, std::size_t layer);
// LayerNorm(h + dropout(ReLU(F [h | mD | mH]))); branch is "fl" or "fl_ha".
Tensor fusion(const Tensor& h, const Tensor& m_d, const Tensor& m_h, const EtdnetParams& p, const ModelConfig& cfg,
              std::size_t layer, const std::string& branch, const ForwardOptions& opt);

ModelOutput forward(const GraphPlan& plan, const ModelConfig& cfg, const EtdnetParams& p,
                    const ForwardOptions& opt = {}, AttentionTrace* trace = nullptr);
ModelOutput forward(const fhg::FullHistoryGraph& g, const ModelConfig& cfg, const EtdnetParams& p,
                    bool training = false);

}  // namespace etd::net
