#include "etd/oracle/flops.hpp"

#include <cmath>

#include "etd/error.hpp"

namespace etd::oracle {

FlopReport count_flops(const fhg::FullHistoryGraph& g, const net::ModelConfig& cfg) {
  cfg.validate();
  using u64 = std::uint64_t;
  const u64 d = cfg.d, b = cfg.window, ks = cfg.sa_sublayers;
  const u64 n = g.num_nodes();
  const u64 e = g.intra_edges().size();
  u64 with_history = 0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (!g.inter_in(i).empty()) ++with_history;
  }

  BlockFlops layer;
  if (cfg.uses_sa()) {
    layer.sa = e * ks * (3 * d * d + 3 * d);
    layer.fl += n * ks * (d * d + 2 * d);
  }
  if (cfg.mode == net::Mode::HAMeanPool) {
    layer.ha = with_history * b * d;
    layer.fl += with_history * (d * d + 2 * d);
  } else if (cfg.uses_ha()) {
    layer.ha = with_history * (2 * b * d * d + d * d + 2 * b * d);
    layer.fl += with_history * (d * d + 2 * d);
  }
  const u64 fusions = cfg.mode == net::Mode::LateFusion ? 2 : 1;
  layer.fl += n * fusions * (3 * d * d + 2 * d);

  FlopReport r;
  r.per_layer.assign(cfg.layers, layer);
  r.blocks = {layer.sa * cfg.layers, layer.ha * cfg.layers, layer.fl * cfg.layers};
  const u64 outputs = cfg.head == net::HeadKind::DualClass ? 9 : 1;
  r.io = n * (cfg.d_in * d + d * d + d * outputs);
  if (cfg.mode == net::Mode::LateFusion) r.io += n * 2 * d * d;
  r.total = r.blocks.total() + r.io;

  // Only row m-1 of each head's attention is ever read, so one B-long row per head.
  r.ha_live_scalars_per_node = cfg.uses_ha() ? 4 * b * d + cfg.ha_heads * b : 0;
  const u64 live = 4 * n * d + 2 * e * cfg.sa_heads + with_history * r.ha_live_scalars_per_node;
  r.peak_live_bytes = 8 * live;
  return r;
}

nlohmann::ordered_json FlopReport::to_json() const {
  nlohmann::ordered_json j;
  j["sa"] = blocks.sa;
  j["ha"] = blocks.ha;
  j["fl"] = blocks.fl;
  j["io"] = io;
  j["total"] = total;
  auto& layers = j["per_layer"] = nlohmann::ordered_json::array();
  for (const auto& l : per_layer) layers.push_back({{"sa", l.sa}, {"ha", l.ha}, {"fl", l.fl}});
  j["ha_live_scalars_per_node"] = ha_live_scalars_per_node;
  j["peak_live_bytes"] = peak_live_bytes;
  return j;
}

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("least_squares needs at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

}  // namespace etd::oracle
