#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace etd::train {

// Per-class F1 for classes [0, n_classes); classes absent from both
// predictions and targets are reported as nullopt and skipped by the macro mean.
std::vector<std::optional<double>> per_class_f1(std::span<const int> pred, std::span<const int> truth,
                                                std::size_t n_classes);
double macro_f1(std::span<const int> pred, std::span<const int> truth, std::size_t n_classes);

// Rank statistic, ties get half credit. Throws UndefinedMetricError when
// only one class is present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
// Step integral of precision over recall, thresholds at every distinct score.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct DualMetrics {
  double macro_f1 = 0.0;  // mean of the speed and direction macro-F1
  double speed_macro_f1 = 0.0;
  double dir_macro_f1 = 0.0;
  double joint_accuracy = 0.0;
  std::vector<std::optional<double>> speed_f1;
  std::vector<std::optional<double>> dir_f1;
};

DualMetrics dual_metrics(std::span<const int> speed_pred, std::span<const int> speed_true,
                         std::span<const int> dir_pred, std::span<const int> dir_true);

struct BinaryMetrics {
  double threshold = 0.5;
  double illicit_f1 = 0.0;
  double macro_f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> roc_auc;  // absent when a class is missing
  std::optional<double> auprc;
};

BinaryMetrics binary_metrics(std::span<const double> probs, std::span<const int> labels, double threshold);
// Threshold in {0.01, ..., 0.99} maximizing illicit F1; ties keep the smallest.
double best_threshold(std::span<const double> probs, std::span<const int> labels);

using MetricRow = std::vector<std::pair<std::string, std::optional<double>>>;

}  // namespace etd::train
