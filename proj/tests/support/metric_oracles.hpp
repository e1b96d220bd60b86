#pragma once

// Brute-force metric and loss references with no shared code paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace etd::test {

// log p(target) for one row, computed with long double and no shared code.
inline long double log_prob(std::span<const double> row, int target) {
  long double mx = row[0];
  for (double v : row) mx = std::max<long double>(mx, v);
  long double z = 0.0L;
  for (double v : row) z += std::exp(static_cast<long double>(v) - mx);
  return static_cast<long double>(row[static_cast<std::size_t>(target)]) - mx - std::log(z);
}

inline double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

// Average precision with every distinct score used as a threshold.
inline double brute_auprc(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> cuts = s;
  std::sort(cuts.begin(), cuts.end(), std::greater<>());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  double area = 0.0, prev = 0.0;
  for (double c : cuts) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= c) (y[i] == 1 ? tp : fp) += 1.0;
    }
    area += (tp / pos - prev) * (tp / (tp + fp));
    prev = tp / pos;
  }
  return area;
}

}  // namespace etd::test
