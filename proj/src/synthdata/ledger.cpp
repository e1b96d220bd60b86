#include "etd/synthdata/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "etd/error.hpp"
#include "etd/numerics/rng.hpp"

namespace etd::synth {
namespace {

std::string tx_entity(std::size_t month, std::size_t i) {
  return "tx" + std::to_string(month) + "_" + std::to_string(i);
}

// First k entries of a seeded shuffle of [0, n).
std::vector<std::size_t> sample(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  for (std::size_t i = 0; i < std::min(k, n); ++i) std::swap(v[i], v[i + rng.index(n - i)]);
  v.resize(std::min(k, n));
  return v;
}

std::size_t rounded(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
}

}  // namespace

void LedgerScenarioConfig::validate() const {
  if (n_months == 0) throw ConfigError("n_months must be positive");
  if (transactions_per_month == 0) throw ConfigError("transactions_per_month must be positive");
  if (fan_in_max == 0) throw ConfigError("fan_in_max must be positive");
  if (addresses_per_tx == 0) throw ConfigError("addresses_per_tx must be positive");
  if (feature_dim < 2) throw ConfigError("feature_dim must be at least 2");
  if (!(illicit_fraction >= 0.0 && illicit_fraction <= 1.0)) throw ConfigError("illicit_fraction must lie in [0, 1]");
  if (!(unknown_fraction >= 0.0 && unknown_fraction <= 1.0)) throw ConfigError("unknown_fraction must lie in [0, 1]");
  if (illicit_fraction + unknown_fraction > 1.0) throw ConfigError("illicit_fraction + unknown_fraction exceeds 1");
}

nlohmann::ordered_json to_json(const LedgerScenarioConfig& c) {
  return {{"n_months", c.n_months},
          {"transactions_per_month", c.transactions_per_month},
          {"illicit_fraction", c.illicit_fraction},
          {"unknown_fraction", c.unknown_fraction},
          {"fan_in_max", c.fan_in_max},
          {"feature_dim", c.feature_dim},
          {"addresses_per_tx", c.addresses_per_tx},
          {"seed", c.seed}};
}

std::vector<int> ledger_labels(const fhg::FullHistoryGraph& g, const std::vector<std::uint8_t>& is_source) {
  const std::size_t n = g.num_nodes();
  if (is_source.size() != n) throw DimensionError("ledger_labels: source flags do not match the node count");
  std::vector<std::vector<std::size_t>> out(n);
  for (const auto& e : g.inter_index()) out[e.src].push_back(e.dst);
  std::vector<int> label(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (!is_source[s]) continue;
    std::vector<std::size_t> frontier{s};
    label[s] = 1;
    for (std::size_t hop = 0; hop < kChainHops; ++hop) {
      std::vector<std::size_t> next;
      for (auto u : frontier) {
        for (auto v : out[u]) {
          label[v] = 1;
          next.push_back(v);
        }
      }
      frontier = std::move(next);
    }
  }
  return label;
}

LedgerScene gen_ledger(const LedgerScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t M = cfg.n_months, P = cfg.transactions_per_month, N = cfg.n_transactions();
  const std::size_t n_illicit = rounded(cfg.illicit_fraction, N);
  const std::size_t n_unknown = std::min(rounded(cfg.unknown_fraction, N), N - n_illicit);

  // chain[m][i] = chain id + 1 for transactions reserved by a laundering chain
  std::vector<std::vector<std::size_t>> chain_of(M, std::vector<std::size_t>(P, 0));
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> chains;
  for (std::size_t left = n_illicit; left > 0;) {
    const std::size_t len = std::min({kChainHops + 1, left, M});
    const std::size_t t0 = rng.index(M - len + 1);
    std::vector<std::pair<std::size_t, std::size_t>> chain;
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t m = t0 + k;
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < P; ++i) {
        if (!chain_of[m][i]) free.push_back(i);
      }
      if (free.empty()) throw ConfigError("illicit_fraction too large: month " + std::to_string(m) + " is exhausted");
      const std::size_t i = free[rng.index(free.size())];
      chain_of[m][i] = chains.size() + 1;
      chain.emplace_back(m, i);
    }
    chains.push_back(std::move(chain));
    left -= len;
  }

  std::vector<std::pair<std::size_t, std::size_t>> licit;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t i = 0; i < P; ++i) {
      if (!chain_of[m][i]) licit.emplace_back(m, i);
    }
  }
  std::vector<std::vector<std::uint8_t>> unknown(M, std::vector<std::uint8_t>(P, 0));
  for (auto k : sample(rng, licit.size(), n_unknown)) unknown[licit[k].first][licit[k].second] = 1;

  const std::size_t n_addr = std::max(cfg.addresses_per_tx, P);
  std::vector<fhg::NodeRecord> nodes;
  std::vector<fhg::Edge> edges;
  for (std::size_t a = 0; a < n_addr; ++a) {
    std::vector<double> f(cfg.feature_dim);
    for (auto& v : f) v = kFeatureNoise * rng.normal();
    f[kSourceFeature] = 0.0;
    nodes.push_back({fhg::NodeId::fixed("addr" + std::to_string(a)), std::move(f), std::nullopt, false});
  }
  for (std::size_t m = 0; m < M; ++m) {
    const auto t = static_cast<std::uint32_t>(m);
    for (std::size_t i = 0; i < P; ++i) {
      const fhg::NodeId id = fhg::NodeId::dynamic(tx_entity(m, i), t);
      std::vector<double> f(cfg.feature_dim);
      for (auto& v : f) v = kFeatureNoise * rng.normal();
      const std::size_t c = chain_of[m][i];
      const bool source = c && chains[c - 1].front() == std::pair{m, i};
      f[kSourceFeature] = source ? 1.0 : 0.0;
      std::optional<fhg::Label> label;
      if (!unknown[m][i]) label = fhg::BinaryLabel{c ? 1 : 0};
      nodes.push_back({id, std::move(f), label, !unknown[m][i]});

      for (auto a : sample(rng, n_addr, cfg.addresses_per_tx)) {
        const auto addr = fhg::NodeId::fixed("addr" + std::to_string(a));
        edges.push_back({addr, id, fhg::EdgeFamily::Intra, "spends"});
        edges.push_back({id, addr, fhg::EdgeFamily::Intra, "spends"});
      }
      if (m == 0 || c) continue;
      std::vector<std::size_t> prev;
      for (std::size_t j = 0; j < P; ++j) {
        if (!chain_of[m - 1][j]) prev.push_back(j);
      }
      const std::size_t fan_in = 1 + rng.index(cfg.fan_in_max);
      for (auto k : sample(rng, prev.size(), fan_in)) {
        edges.push_back({fhg::NodeId::dynamic(tx_entity(m - 1, prev[k]), t - 1), id, fhg::EdgeFamily::Inter,
                         std::nullopt});
      }
    }
  }
  for (const auto& chain : chains) {
    for (std::size_t k = 1; k < chain.size(); ++k) {
      const auto [m0, i0] = chain[k - 1];
      const auto [m1, i1] = chain[k];
      edges.push_back({fhg::NodeId::dynamic(tx_entity(m0, i0), static_cast<std::uint32_t>(m0)),
                       fhg::NodeId::dynamic(tx_entity(m1, i1), static_cast<std::uint32_t>(m1)),
                       fhg::EdgeFamily::Inter, std::nullopt});
    }
  }

  LedgerScene scene;
  scene.config = cfg;
  scene.graph = fhg::FullHistoryGraph::build(std::move(nodes), std::move(edges));
  const std::size_t n = scene.graph.num_nodes();
  scene.truth.assign(n, 0);
  scene.is_source.assign(n, 0);
  for (const auto& chain : chains) {
    std::vector<std::size_t> idx;
    for (const auto& [m, i] : chain) {
      idx.push_back(scene.graph.index_of(fhg::NodeId::dynamic(tx_entity(m, i), static_cast<std::uint32_t>(m))));
      scene.truth[idx.back()] = 1;
    }
    scene.is_source[idx.front()] = 1;
    scene.chains.push_back(std::move(idx));
  }
  return scene;
}

nlohmann::ordered_json ledger_metadata(const LedgerScene& scene) {
  std::size_t illicit = 0, licit = 0, unknown = 0;
  for (const auto& node : scene.graph.nodes()) {
    if (node.id.is_static()) continue;
    if (!node.mask) {
      ++unknown;
    } else if (std::get<fhg::BinaryLabel>(*node.label).value) {
      ++illicit;
    } else {
      ++licit;
    }
  }
  nlohmann::ordered_json j;
  j["generator"] = kLedgerGenerator;
  j["config"] = to_json(scene.config);
  j["label_rules"] = {{"chain_hops", kChainHops},
                      {"source_feature", kSourceFeature},
                      {"illicit", "marked source or within chain_hops inter edges downstream of one"}};
  j["counts"] = {{"nodes", scene.graph.num_nodes()},
                 {"intra", scene.graph.intra_edges().size()},
                 {"inter", scene.graph.inter_edges().size()},
                 {"illicit", illicit},
                 {"licit", licit},
                 {"unknown", unknown},
                 {"chains", scene.chains.size()}};
  j["auc_defined"] = illicit > 0 && licit > 0;
  return j;
}

}  // namespace etd::synth
