#include "etd/etdnet/model.hpp"

#include <cmath>

#include "etd/error.hpp"
#include "etd/numerics/ops.hpp"
#include "etd/numerics/rng.hpp"

namespace etd::net {

GraphPlan make_plan(const fhg::FullHistoryGraph& g, std::size_t window) {
  if (window == 0) throw ConfigError("window must be positive");
  GraphPlan plan;
  plan.n_nodes = g.num_nodes();
  plan.window = window;
  if (plan.n_nodes > 0) {
    std::vector<double> x;
    x.reserve(plan.n_nodes * g.feature_dim());
    for (const auto& n : g.nodes()) x.insert(x.end(), n.features.begin(), n.features.end());
    plan.features = Tensor::from({plan.n_nodes, g.feature_dim()}, std::move(x));
  }
  for (const auto& e : g.intra_index()) {
    plan.intra_src.push_back(e.src);
    plan.intra_dst.push_back(e.dst);
  }
  for (std::size_t i = 0; i < plan.n_nodes; ++i) {
    if (g.node(i).id.is_static()) continue;
    auto preds = g.predecessors_window(i, window);
    if (preds.empty()) continue;
    const std::size_t slot = plan.ha_target.size();
    plan.ha_target.push_back(i);
    plan.ha_query.push_back(preds.back());
    plan.ha_count.push_back(preds.size());
    for (auto v : preds) {
      plan.pair_slot.push_back(slot);
      plan.pair_node.push_back(v);
    }
  }
  return plan;
}

Tensor linear(const Tensor& x, const Tensor& w) { return ops::matmul(x, ops::transpose(w)); }

namespace {

Tensor layer_norm_at(const Tensor& x, const EtdnetParams& p, const std::string& gain, const std::string& bias) {
  return ops::layer_norm(x, p.at(gain), p.at(bias));
}

// Splits the scoring vector a [2d'] into column vectors for the query and key halves.
std::pair<Tensor, Tensor> split_score(const Tensor& a, std::size_t half) {
  Tensor row = ops::reshape(a, {1, 2 * half});
  return {ops::transpose(ops::slice_cols(row, 0, half)), ops::transpose(ops::slice_cols(row, half, 2 * half))};
}

Tensor sa_sublayer(const GraphPlan& plan, const Tensor& h, const EtdnetParams& p, const ModelConfig& cfg,
                   std::size_t layer, std::size_t k, AttentionTrace* trace) {
  const std::size_t n = plan.n_nodes;
  const std::size_t ds = cfg.sa_head_dim();
  const bool has_edges = !plan.intra_src.empty();
  std::vector<Tensor> heads;
  heads.reserve(cfg.sa_heads);
  for (std::size_t r = 0; r < cfg.sa_heads; ++r) {
    if (!has_edges) {
      heads.push_back(Tensor::zeros({n, ds}));
      continue;
    }
    Tensor q = linear(h, p.at(sa_head_path(layer, k, r, "WQ")));
    Tensor kk = linear(h, p.at(sa_head_path(layer, k, r, "WK")));
    Tensor v = linear(h, p.at(sa_head_path(layer, k, r, "WV")));
    auto [a_q, a_k] = split_score(p.at(sa_head_path(layer, k, r, "a")), ds);
    // a^T [W_Q h_u | W_K h_v] = (a_q . q_u) + (a_k . k_v)
    Tensor s_q = ops::matmul(q, a_q);
    Tensor s_k = ops::matmul(kk, a_k);
    Tensor e = ops::leaky_relu(ops::add(ops::gather_rows(s_q, plan.intra_dst), ops::gather_rows(s_k, plan.intra_src)),
                               cfg.leaky_slope);
    Tensor alpha = ops::segment_softmax(e, plan.intra_dst, n);
    if (trace) trace->sa_alpha.push_back(alpha);
    Tensor msg = ops::mul_col(ops::gather_rows(v, plan.intra_src), alpha);
    heads.push_back(ops::scatter_add_rows(msg, plan.intra_dst, n));
  }
  Tensor agg = linear(ops::concat_cols(heads), p.at(sa_path(layer, k, "O")));
  return layer_norm_at(ops::add(agg, h), p, sa_path(layer, k, "ln_gain"), sa_path(layer, k, "ln_bias"));
}

std::uint64_t dropout_site(const ForwardOptions& opt, std::size_t layer, const std::string& branch) {
  const std::uint64_t b = branch == "fl" ? 1 : 2;
  return hash_combine(opt.stream, static_cast<std::uint64_t>(layer) * 8 + b);
}

}  // namespace

Tensor step_attention(const GraphPlan& plan, const Tensor& h, const EtdnetParams& p, const ModelConfig& cfg,
                      std::size_t layer, AttentionTrace* trace) {
  Tensor out = h;
  for (std::size_t k = 0; k < cfg.sa_sublayers; ++k) out = sa_sublayer(plan, out, p, cfg, layer, k, trace);
  return out;
}

Tensor history_attention(const GraphPlan& plan, const Tensor& h, const EtdnetParams& p, const ModelConfig& cfg,
                         std::size_t layer) {
  const std::size_t n = plan.n_nodes;
  if (plan.ha_target.empty()) return Tensor::zeros({n, cfg.d});
  const std::size_t targets = plan.ha_target.size();
  const std::size_t dh = cfg.ha_head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor ones = Tensor::full({dh, 1}, 1.0);
  std::vector<Tensor> heads;
  heads.reserve(cfg.ha_heads);
  for (std::size_t r = 0; r < cfg.ha_heads; ++r) {
    Tensor q = ops::gather_rows(linear(h, p.at(ha_head_path(layer, r, "WQ"))), plan.ha_query);
    Tensor k = ops::gather_rows(linear(h, p.at(ha_head_path(layer, r, "WK"))), plan.pair_node);
    Tensor v = ops::gather_rows(linear(h, p.at(ha_head_path(layer, r, "WV"))), plan.pair_node);
    // Only the most recent query row is read, so scores are one row per target.
    Tensor scores = ops::scale(ops::matmul(ops::mul(ops::gather_rows(q, plan.pair_slot), k), ones), inv_sqrt);
    Tensor alpha = ops::segment_softmax(scores, plan.pair_slot, targets);
    heads.push_back(ops::scatter_add_rows(ops::mul_col(v, alpha), plan.pair_slot, targets));
  }
  Tensor out = ops::matmul(ops::concat_cols(heads), p.at(ha_path(layer, "O")));
  out = layer_norm_at(out, p, ha_path(layer, "ln_gain"), ha_path(layer, "ln_bias"));
  return ops::scatter_add_rows(out, plan.ha_target, n);
}

Tensor history_mean_pool(const GraphPlan& plan, const Tensor& h, const EtdnetParams& p, std::size_t layer) {
  const std::size_t n = plan.n_nodes;
  const std::size_t d = h.cols();
  if (plan.ha_target.empty()) return Tensor::zeros({n, d});
  std::vector<double> w(plan.pair_slot.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / static_cast<double>(plan.ha_count[plan.pair_slot[i]]);
  const std::size_t pairs = w.size();
  Tensor weights = Tensor::from({pairs}, std::move(w));
  Tensor mean =
      ops::scatter_add_rows(ops::mul_col(ops::gather_rows(h, plan.pair_node), weights), plan.pair_slot,
                            plan.ha_target.size());
  Tensor out = layer_norm_at(linear(mean, p.at(ha_path(layer, "mean_proj"))), p, ha_path(layer, "ln_gain"),
                             ha_path(layer, "ln_bias"));
  return ops::scatter_add_rows(out, plan.ha_target, n);
}

Tensor fusion(const Tensor& h, const Tensor& m_d, const Tensor& m_h, const EtdnetParams& p, const ModelConfig& cfg,
              std::size_t layer, const std::string& branch, const ForwardOptions& opt) {
  const Tensor parts[] = {h, m_d, m_h};
  Tensor z = ops::relu(linear(ops::concat_cols(parts), p.at(fl_path(layer, branch, "F"))));
  z = ops::dropout(z, cfg.dropout, {opt.seed, opt.epoch, dropout_site(opt, layer, branch)}, opt.training);
  return layer_norm_at(ops::add(h, z), p, fl_path(layer, branch, "ln_gain"), fl_path(layer, branch, "ln_bias"));
}

ModelOutput forward(const GraphPlan& plan, const ModelConfig& cfg, const EtdnetParams& p, const ForwardOptions& opt,
                    AttentionTrace* trace) {
  check_consistent(cfg, p);
  if (plan.n_nodes == 0) throw ContractError("forward on an empty graph");
  if (plan.features.cols() != cfg.d_in) {
    throw ConfigError("d_in: graph has feature width " + std::to_string(plan.features.cols()) + ", config says " +
                      std::to_string(cfg.d_in));
  }
  if (plan.window != cfg.window) throw ConfigError("plan window differs from config window");

  const std::size_t n = plan.n_nodes;
  const Tensor zero = Tensor::zeros({n, cfg.d});
  Tensor h = ops::add_row(linear(plan.features, p.at("input/W")), p.at("input/b"));

  auto history = [&](const Tensor& x, std::size_t l) {
    return cfg.mode == Mode::HAMeanPool ? history_mean_pool(plan, x, p, l) : history_attention(plan, x, p, cfg, l);
  };

  if (cfg.mode == Mode::LateFusion) {
    Tensor h_sa = h;
    Tensor h_ha = h;
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
      Tensor m_d = step_attention(plan, h_sa, p, cfg, l, trace);
      h_sa = fusion(h_sa, m_d, zero, p, cfg, l, "fl", opt);
      Tensor m_h = history(h_ha, l);
      h_ha = fusion(h_ha, zero, m_h, p, cfg, l, "fl_ha", opt);
    }
    const Tensor both[] = {h_sa, h_ha};
    h = ops::add_row(linear(ops::concat_cols(both), p.at("late/W")), p.at("late/b"));
  } else {
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
      Tensor m_d = cfg.uses_sa() ? step_attention(plan, h, p, cfg, l, trace) : zero;
      Tensor m_h = cfg.uses_ha() ? history(h, l) : zero;
      h = fusion(h, m_d, m_h, p, cfg, l, "fl", opt);
    }
  }

  ModelOutput out;
  out.embedding = h;
  Tensor hidden = ops::relu(ops::add_row(linear(h, p.at("head/hidden_W")), p.at("head/hidden_b")));
  if (cfg.head == HeadKind::DualClass) {
    out.speed = ops::add_row(linear(hidden, p.at("head/speed_W")), p.at("head/speed_b"));
    out.dir = ops::add_row(linear(hidden, p.at("head/dir_W")), p.at("head/dir_b"));
  } else {
    out.binary = ops::reshape(ops::add_row(linear(hidden, p.at("head/out_W")), p.at("head/out_b")), {n});
  }
  return out;
}

ModelOutput forward(const fhg::FullHistoryGraph& g, const ModelConfig& cfg, const EtdnetParams& p, bool training) {
  ForwardOptions opt;
  opt.training = training;
  return forward(make_plan(g, cfg.window), cfg, p, opt);
}

}  // namespace etd::net
