#pragma once

#include <cstdint>
#include <vector>

#include "etd/etdnet/config.hpp"
#include "etd/fhgraph/graph.hpp"
#include "json.hpp"

namespace etd::oracle {

// Multiply-add counts. SA is charged per Intra edge (projections, score and
// weighted value for every edge and sublayer), HA per dynamic node with
// history over the zero-padded B-row window, FL per node for everything that
// turns messages into the next embedding (SA and HA output projections and
// norms, fusion). Input projection and task head are kept apart in `io`.
struct BlockFlops {
  std::uint64_t sa = 0;
  std::uint64_t ha = 0;
  std::uint64_t fl = 0;

  std::uint64_t total() const { return sa + ha + fl; }
};

struct FlopReport {
  std::vector<BlockFlops> per_layer;
  BlockFlops blocks;  // summed over layers
  std::uint64_t io = 0;
  std::uint64_t total = 0;
  // HA scratch per dynamic node: Z plus Q/K/V rows and one attention matrix per head.
  std::uint64_t ha_live_scalars_per_node = 0;
  std::uint64_t peak_live_bytes = 0;

  nlohmann::ordered_json to_json() const;
};

FlopReport count_flops(const fhg::FullHistoryGraph& g, const net::ModelConfig& cfg);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace etd::oracle
