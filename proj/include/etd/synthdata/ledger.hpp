#pragma once

#include <cstdint>
#include <vector>

#include "etd/fhgraph/graph.hpp"
#include "json.hpp"

namespace etd::synth {

inline constexpr std::size_t kChainHops = 3;
inline constexpr std::size_t kSourceFeature = 0;
inline constexpr double kFeatureNoise = 0.1;  // std of the uninformative features
inline constexpr const char* kLedgerGenerator = "ledger-v1";

struct LedgerScenarioConfig {
  std::size_t n_months = 10;
  std::size_t transactions_per_month = 50;
  double illicit_fraction = 0.02;
  double unknown_fraction = 0.2;
  std::size_t fan_in_max = 3;
  std::size_t feature_dim = 94;
  std::size_t addresses_per_tx = 3;
  std::uint64_t seed = 0;

  std::size_t n_transactions() const { return n_months * transactions_per_month; }
  void validate() const;
};

nlohmann::ordered_json to_json(const LedgerScenarioConfig& c);

struct LedgerScene {
  LedgerScenarioConfig config;
  fhg::FullHistoryGraph graph;
  // Ground truth per graph node (addresses are 0); unknown nodes keep their
  // true class here while the graph hides it.
  std::vector<int> truth;
  std::vector<std::uint8_t> is_source;
  std::vector<std::vector<std::size_t>> chains;  // node indices, source first
};

// A transaction is illicit iff it is a marked source or lies within
// kChainHops inter edges downstream of one.
std::vector<int> ledger_labels(const fhg::FullHistoryGraph& g, const std::vector<std::uint8_t>& is_source);

// Monthly transactions spending into the next month with fan-in at most
// fan_in_max; addresses are static nodes linked both ways. Laundering chains
// start at a transaction carrying the source marker in feature 0 and run
// through exclusive transactions in consecutive months.
LedgerScene gen_ledger(const LedgerScenarioConfig& cfg);

nlohmann::ordered_json ledger_metadata(const LedgerScene& scene);

}  // namespace etd::synth
