#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "etd/error.hpp"
#include "etd/fhgraph/jsonl.hpp"
#include "etd/synthdata/ledger.hpp"
#include "etd/synthdata/traffic.hpp"

using namespace etd;
using namespace etd::synth;

namespace {

std::string dump(const fhg::FullHistoryGraph& g) {
  std::ostringstream out;
  fhg::write_jsonl(g, out);
  return out.str();
}

const fhg::DualLabel& dual(const fhg::NodeRecord& n) { return std::get<fhg::DualLabel>(*n.label); }

}  // namespace

TEST_CASE("traffic: one vehicle with no map gives a bare self chain") {
  TrafficScenarioConfig cfg;
  cfg.n_vehicles = 1;
  cfg.n_static = 0;
  cfg.n_timesteps = 3;
  auto s = gen_traffic(cfg);
  CHECK(s.graph.num_nodes() == 3);
  CHECK(s.graph.inter_edges().size() == 2);
  CHECK(s.graph.intra_edges().size() == 0);
  CHECK(s.graph.feature_dim() == 14);
}

TEST_CASE("traffic: constant speed regime labels no-change") {
  TrafficScenarioConfig cfg;
  cfg.n_vehicles = 30;
  cfg.seed = 3;
  auto s = gen_traffic(cfg);
  std::size_t seen = 0;
  for (const auto& tr : s.tracks) {
    if (tr.regime != kSpeedSame) continue;
    for (std::uint32_t t = 1; t < cfg.n_timesteps; ++t) {
      const auto& n = s.graph.node(s.graph.index_of(fhg::NodeId::dynamic(tr.entity, t)));
      REQUIRE(n.mask);
      CHECK(dual(n).speed == kSpeedSame);
      ++seen;
    }
  }
  CHECK(seen > 0);
}

TEST_CASE("traffic: fixed seed reproduces graph and labels") {
  TrafficScenarioConfig cfg;
  cfg.n_static = 8;
  cfg.seed = 41;
  CHECK(dump(gen_traffic(cfg).graph) == dump(gen_traffic(cfg).graph));
  auto other = cfg;
  other.seed = 42;
  CHECK(dump(gen_traffic(cfg).graph) != dump(gen_traffic(other).graph));
}

TEST_CASE("traffic: stored labels follow from the ground-truth states") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TrafficScenarioConfig cfg;
    cfg.seed = seed;
    cfg.n_static = 8;
    auto s = gen_traffic(cfg);
    for (const auto& tr : s.tracks) {
      REQUIRE(tr.states.size() == cfg.n_timesteps + 1);
      for (std::uint32_t t = 0; t < cfg.n_timesteps; ++t) {
        const auto& n = s.graph.node(s.graph.index_of(fhg::NodeId::dynamic(tr.entity, t)));
        CHECK(dual(n) == traffic_label(tr.states[t], tr.states[t + 1]));
        CHECK(n.mask == (t > 0));
      }
    }
  }
}

TEST_CASE("traffic: label thresholds") {
  VehicleState a{0.0, 0.0, 0.0, 5.0};
  auto b = a;
  b.x = 0.5;
  CHECK(traffic_label(a, b) == fhg::DualLabel{kSpeedSame, kStraight});
  b.speed = 6.0;
  CHECK(traffic_label(a, b).speed == kAccelerate);
  b.speed = 4.0;
  CHECK(traffic_label(a, b).speed == kSlowDown);
  b.speed = 0.2;
  CHECK(traffic_label(a, b).speed == kStopped);
  b = a;
  b.heading = 20.0 * M_PI / 180.0;
  CHECK(traffic_label(a, b).dir == kLeftTurn);
  b.heading = -20.0 * M_PI / 180.0;
  CHECK(traffic_label(a, b).dir == kRightTurn);
  b.heading = 10.0 * M_PI / 180.0;
  CHECK(traffic_label(a, b).dir == kStraight);
  b = a;
  b.y = 1.0;
  CHECK(traffic_label(a, b).dir == kLeftLane);
  b.y = -1.0;
  CHECK(traffic_label(a, b).dir == kRightLane);
}

TEST_CASE("traffic: direction comes from the map element in contact") {
  // the maneuver is visible only through the element's features on an intra edge
  TrafficScenarioConfig cfg;
  cfg.seed = 8;
  cfg.n_vehicles = 20;
  cfg.n_static = 8;
  auto s = gen_traffic(cfg);
  const auto& g = s.graph;
  std::size_t with_contact = 0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto& n = g.node(i);
    if (!n.mask) continue;
    int expect = kStraight;
    for (auto src : g.intra_in(i)) {
      const auto& m = g.node(src);
      if (!m.id.is_static()) continue;
      ++with_contact;
      for (int k = 0; k < 5; ++k) {
        if (m.features[7 + static_cast<std::size_t>(k)] == 1.0) expect = k;
      }
    }
    CHECK(dual(n).dir == expect);
  }
  CHECK(with_contact > 0);
}

TEST_CASE("traffic: config validation") {
  TrafficScenarioConfig cfg;
  cfg.n_timesteps = 1;
  CHECK_THROWS_AS(gen_traffic(cfg), ConfigError);
  cfg = {};
  cfg.n_vehicles = 0;
  CHECK_THROWS_AS(gen_traffic(cfg), ConfigError);
  cfg = {};
  cfg.feature_dim = 10;
  CHECK_THROWS_AS(gen_traffic(cfg), ConfigError);
  cfg = {};
  cfg.feature_dim = 20;
  CHECK(gen_traffic(cfg).graph.feature_dim() == 20);
}

TEST_CASE("traffic metadata echoes config and rule constants") {
  TrafficScenarioConfig cfg;
  cfg.seed = 5;
  auto s = gen_traffic(cfg);
  auto j = traffic_metadata(s);
  CHECK(j["config"]["seed"] == 5);
  CHECK(j["label_rules"]["heading_delta_deg"] == kHeadingDeltaDeg);
  CHECK(j["counts"]["nodes"] == s.graph.num_nodes());
}

TEST_CASE("ledger: no illicit transactions leaves AUC undefined") {
  LedgerScenarioConfig cfg;
  cfg.illicit_fraction = 0.0;
  auto s = gen_ledger(cfg);
  for (const auto& n : s.graph.nodes()) {
    if (n.mask) CHECK(std::get<fhg::BinaryLabel>(*n.label).value == 0);
  }
  CHECK(ledger_metadata(s)["auc_defined"] == false);
  CHECK(s.chains.empty());
}

TEST_CASE("ledger: fan-in bound holds and fan_in_max=1 gives in-degree at most one") {
  for (std::size_t fan : {1u, 2u, 4u}) {
    LedgerScenarioConfig cfg;
    cfg.fan_in_max = fan;
    cfg.seed = fan;
    auto s = gen_ledger(cfg);
    for (std::size_t i = 0; i < s.graph.num_nodes(); ++i) CHECK(s.graph.inter_in(i).size() <= fan);
    CHECK(s.graph.inter_is_acyclic());
  }
}

TEST_CASE("ledger: class counts within one node of the configured fractions") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LedgerScenarioConfig cfg;
    cfg.seed = seed;
    cfg.illicit_fraction = 0.02 + 0.01 * static_cast<double>(seed);
    cfg.unknown_fraction = 0.3;
    auto s = gen_ledger(cfg);
    auto counts = ledger_metadata(s)["counts"];
    const double n = static_cast<double>(cfg.n_transactions());
    CHECK(std::abs(counts["illicit"].get<double>() - cfg.illicit_fraction * n) <= 1.0);
    CHECK(std::abs(counts["unknown"].get<double>() - cfg.unknown_fraction * n) <= 1.0);
    CHECK(counts["illicit"].get<std::size_t>() + counts["licit"].get<std::size_t>() +
              counts["unknown"].get<std::size_t>() ==
          cfg.n_transactions());
  }
}

TEST_CASE("ledger: labels are recomputable from the chain sources") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LedgerScenarioConfig cfg;
    cfg.seed = seed;
    cfg.illicit_fraction = 0.05;
    auto s = gen_ledger(cfg);
    CHECK(ledger_labels(s.graph, s.is_source) == s.truth);
    for (std::size_t i = 0; i < s.graph.num_nodes(); ++i) {
      const auto& n = s.graph.node(i);
      if (n.mask) CHECK(std::get<fhg::BinaryLabel>(*n.label).value == s.truth[i]);
    }
  }
}

TEST_CASE("ledger: a chain-following classifier is perfect on masked nodes") {
  LedgerScenarioConfig cfg;
  cfg.seed = 77;
  cfg.illicit_fraction = 0.04;
  auto s = gen_ledger(cfg);
  const auto& g = s.graph;
  // walk from every node carrying the source marker, using only the graph
  std::vector<int> pred(g.num_nodes(), 0);
  std::map<std::size_t, std::vector<std::size_t>> out;
  for (const auto& e : g.inter_index()) out[e.src].push_back(e.dst);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (g.node(i).features[kSourceFeature] != 1.0) continue;
    std::set<std::size_t> reach{i};
    std::vector<std::size_t> frontier{i};
    for (int hop = 0; hop < 3; ++hop) {
      std::vector<std::size_t> next;
      for (auto u : frontier) {
        for (auto v : out[u]) {
          reach.insert(v);
          next.push_back(v);
        }
      }
      frontier = next;
    }
    for (auto v : reach) pred[v] = 1;
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto& n = g.node(i);
    if (!n.mask) continue;
    const int y = std::get<fhg::BinaryLabel>(*n.label).value;
    tp += pred[i] && y;
    fp += pred[i] && !y;
    fn += !pred[i] && y;
  }
  REQUIRE(tp > 0);
  CHECK(2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) == 1.0);
}

TEST_CASE("ledger: chain members sit in consecutive months and the signal is multi-hop") {
  LedgerScenarioConfig cfg;
  cfg.seed = 12;
  cfg.illicit_fraction = 0.04;
  auto s = gen_ledger(cfg);
  REQUIRE_FALSE(s.chains.empty());
  std::size_t deep = 0;
  for (const auto& chain : s.chains) {
    for (std::size_t k = 1; k < chain.size(); ++k) {
      CHECK(*s.graph.node(chain[k]).id.t == *s.graph.node(chain[k - 1]).id.t + 1);
      CHECK(s.graph.inter_in(chain[k]).size() == 1);
      CHECK(s.graph.node(chain[k]).features[kSourceFeature] == 0.0);
    }
    deep += chain.size() > 2;
  }
  CHECK(deep > 0);
}

TEST_CASE("ledger: reruns are identical and unknown nodes are unlabeled") {
  LedgerScenarioConfig cfg;
  cfg.seed = 4;
  auto a = gen_ledger(cfg), b = gen_ledger(cfg);
  CHECK(dump(a.graph) == dump(b.graph));
  for (const auto& n : a.graph.nodes()) {
    if (!n.id.is_static() && !n.mask) CHECK_FALSE(n.label.has_value());
  }
}

TEST_CASE("ledger: config validation") {
  LedgerScenarioConfig cfg;
  cfg.illicit_fraction = 0.7;
  cfg.unknown_fraction = 0.4;
  CHECK_THROWS_AS(gen_ledger(cfg), ConfigError);
  cfg = {};
  cfg.illicit_fraction = -0.1;
  CHECK_THROWS_AS(gen_ledger(cfg), ConfigError);
  cfg = {};
  cfg.fan_in_max = 0;
  CHECK_THROWS_AS(gen_ledger(cfg), ConfigError);
}
