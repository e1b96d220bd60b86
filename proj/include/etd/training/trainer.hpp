#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etd/etdnet/config.hpp"
#include "etd/etdnet/model.hpp"
#include "etd/etdnet/params.hpp"
#include "etd/fhgraph/graph.hpp"
#include "etd/training/metrics.hpp"
#include "json.hpp"

namespace etd::train {

enum class Monitor { MacroF1, JointAccuracy, IllicitF1 };

std::string_view to_string(Monitor m);
Monitor parse_monitor(std::string_view s);

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 7;
  std::uint64_t seed = 0;
  Monitor monitor = Monitor::MacroF1;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j, TrainConfig base = {});

// One scene (traffic) or one ten-month window (ledger) with its targets.
struct LabeledUnit {
  std::string name;
  fhg::FullHistoryGraph graph;
  net::GraphPlan plan;
  std::vector<std::uint8_t> mask;
  std::vector<int> speed;       // dual head; 0 where unlabeled
  std::vector<int> dir;
  std::vector<double> binary;   // binary head; 0 where unlabeled

  std::size_t masked() const;
};

// Mask = node mask and a label of the head's kind; a masked node with the
// wrong label kind is a ContractError.
LabeledUnit make_unit(fhg::FullHistoryGraph g, std::size_t window, net::HeadKind head, std::string name = {});

// Masked loss of one unit's forward output.
Tensor unit_loss(const net::ModelOutput& out, const LabeledUnit& u, net::HeadKind head);

struct Evaluation {
  double loss = 0.0;
  double monitor = 0.0;
  MetricRow metrics;
  std::optional<DualMetrics> dual;
  std::optional<BinaryMetrics> binary;
};

// Eval-mode forward over all units. For the binary head the threshold is
// swept on these units unless one is given.
Evaluation evaluate(const net::ModelConfig& cfg, const net::EtdnetParams& params, std::span<const LabeledUnit> units,
                    Monitor monitor, std::optional<double> threshold = std::nullopt);

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // masked-node mean over the epoch's training forwards
  MetricRow metrics;      // validation
  double monitor = 0.0;
  double wall_ms = 0.0;
  std::uint64_t flops = 0;
};

struct TrainResult {
  net::EtdnetParams best;
  std::size_t best_epoch = 0;
  double best_monitor = 0.0;
  std::vector<EpochReport> reports;
};

using EpochCallback = std::function<void(const EpochReport&)>;

TrainResult train(const net::ModelConfig& cfg, const net::EtdnetParams& init, std::span<const LabeledUnit> train_units,
                  std::span<const LabeledUnit> val_units, const TrainConfig& tcfg, const EpochCallback& on_epoch = {});

// Deterministic columns only: epoch,loss,<metrics>,flops. Wall time goes to
// the timing CSV so reruns can be compared byte for byte.
void write_metrics_csv(std::ostream& out, std::span<const EpochReport> reports);
void write_timing_csv(std::ostream& out, std::span<const EpochReport> reports);
std::string format_number(double v);

}  // namespace etd::train
