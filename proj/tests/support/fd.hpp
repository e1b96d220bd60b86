#pragma once

// Test-only central-difference helpers. Deliberately independent of the
// library's gradient checker so the two can vouch for each other.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "etd/numerics/tensor.hpp"

namespace etd::test {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Worst relative error between backward() and central differences over every
// coordinate of every input. `f` must rebuild the graph from the inputs.
inline double fd_worst(std::vector<Tensor>& inputs, const std::function<Tensor()>& f, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto w = inputs[k].mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double up = f().item();
      w[i] = saved - h;
      const double down = f().item();
      w[i] = saved;
      worst = std::max(worst, rel_err(analytic[k][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace etd::test
