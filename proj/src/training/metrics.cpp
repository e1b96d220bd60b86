#include "etd/training/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "etd/error.hpp"

namespace etd::train {
namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

std::optional<double> f1_of(const Counts& c) {
  if (c.tp + c.fp + c.fn == 0) return std::nullopt;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": prediction and target lengths differ");
  if (a == 0) throw EmptyBatchError(std::string(what) + ": no nodes to score");
}

std::pair<std::size_t, std::size_t> class_totals(std::span<const int> labels) {
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1;
  return {pos, labels.size() - pos};
}

}  // namespace

std::vector<std::optional<double>> per_class_f1(std::span<const int> pred, std::span<const int> truth,
                                                std::size_t n_classes) {
  check_pair(pred.size(), truth.size(), "f1");
  std::vector<Counts> c(n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = static_cast<std::size_t>(pred[i]);
    const auto t = static_cast<std::size_t>(truth[i]);
    if (p >= n_classes || t >= n_classes) throw ContractError("f1: class index out of range");
    if (p == t) {
      ++c[p].tp;
    } else {
      ++c[p].fp;
      ++c[t].fn;
    }
  }
  std::vector<std::optional<double>> out;
  for (const auto& x : c) out.push_back(f1_of(x));
  return out;
}

double macro_f1(std::span<const int> pred, std::span<const int> truth, std::size_t n_classes) {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& f : per_class_f1(pred, truth, n_classes)) {
    if (f) {
      sum += *f;
      ++present;
    }
  }
  return sum / static_cast<double>(present);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_pair(scores.size(), labels.size(), "roc_auc");
  const auto [pos, neg] = class_totals(labels);
  if (pos == 0 || neg == 0) throw UndefinedMetricError("roc_auc needs both classes present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // average 1-based ranks over tie groups
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum += avg;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_pair(scores.size(), labels.size(), "auprc");
  const auto [pos, neg] = class_totals(labels);
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auprc needs both classes present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

DualMetrics dual_metrics(std::span<const int> speed_pred, std::span<const int> speed_true,
                         std::span<const int> dir_pred, std::span<const int> dir_true) {
  check_pair(speed_pred.size(), speed_true.size(), "dual_metrics");
  check_pair(dir_pred.size(), dir_true.size(), "dual_metrics");
  check_pair(speed_pred.size(), dir_pred.size(), "dual_metrics");
  DualMetrics m;
  m.speed_f1 = per_class_f1(speed_pred, speed_true, 4);
  m.dir_f1 = per_class_f1(dir_pred, dir_true, 5);
  m.speed_macro_f1 = macro_f1(speed_pred, speed_true, 4);
  m.dir_macro_f1 = macro_f1(dir_pred, dir_true, 5);
  m.macro_f1 = (m.speed_macro_f1 + m.dir_macro_f1) / 2.0;
  std::size_t joint = 0;
  for (std::size_t i = 0; i < speed_pred.size(); ++i) joint += speed_pred[i] == speed_true[i] && dir_pred[i] == dir_true[i];
  m.joint_accuracy = static_cast<double>(joint) / static_cast<double>(speed_pred.size());
  return m;
}

BinaryMetrics binary_metrics(std::span<const double> probs, std::span<const int> labels, double threshold) {
  check_pair(probs.size(), labels.size(), "binary_metrics");
  BinaryMetrics m;
  m.threshold = threshold;
  std::vector<int> pred(probs.size());
  Counts c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pred[i] = probs[i] >= threshold ? 1 : 0;
    if (pred[i] == 1 && labels[i] == 1) ++c.tp;
    if (pred[i] == 1 && labels[i] == 0) ++c.fp;
    if (pred[i] == 0 && labels[i] == 1) ++c.fn;
  }
  m.illicit_f1 = f1_of(c).value_or(0.0);
  m.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  m.macro_f1 = macro_f1(pred, labels, 2);
  const auto [pos, neg] = class_totals(labels);
  if (pos > 0 && neg > 0) {
    m.roc_auc = roc_auc(probs, labels);
    m.auprc = auprc(probs, labels);
  }
  return m;
}

double best_threshold(std::span<const double> probs, std::span<const int> labels) {
  check_pair(probs.size(), labels.size(), "best_threshold");
  double best = 0.5, best_f1 = -1.0;
  for (int k = 1; k <= 99; ++k) {
    const double t = k / 100.0;
    Counts c;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const bool hit = probs[i] >= t;
      if (hit && labels[i] == 1) ++c.tp;
      if (hit && labels[i] == 0) ++c.fp;
      if (!hit && labels[i] == 1) ++c.fn;
    }
    const double f1 = f1_of(c).value_or(0.0);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = t;
    }
  }
  return best;
}

}  // namespace etd::train
