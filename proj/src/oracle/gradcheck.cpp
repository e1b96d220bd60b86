#include "etd/oracle/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "etd/error.hpp"
#include "etd/numerics/ops.hpp"
#include "etd/numerics/rng.hpp"

namespace etd::oracle {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::string> GradcheckReport::failing(double tol) const {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (!(p.worst_rel_err < tol)) out.push_back(p.path);
  }
  return out;
}

nlohmann::ordered_json GradcheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["worst"] = worst;
  j["worst_path"] = worst_path;
  auto& arr = j["paths"] = nlohmann::ordered_json::array();
  for (const auto& p : paths) arr.push_back({{"path", p.path}, {"worst_rel_err", p.worst_rel_err}, {"coords", p.coords}});
  return j;
}

GradcheckReport fd_gradcheck(std::vector<NamedTensor>& params, const std::function<Tensor()>& loss, double eps,
                             std::uint64_t seed) {
  for (auto& p : params) p.tensor.zero_grad();
  Tensor l0 = loss();
  if (!std::isfinite(l0.item())) throw NumericError("gradcheck: loss is not finite at the check point");
  l0.backward();

  GradcheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [path, t] = params[pi];
    const std::size_t n = t.numel();
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad()) {
      auto g = t.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    std::vector<std::size_t> coords;
    if (n <= kFullCheckLimit) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      Rng rng(hash_combine(seed, pi));
      for (std::size_t i = 0; i < kSampledCoords; ++i) coords.push_back(rng.index(n));
    }
    PathCheck check{path, 0.0, coords.size()};
    auto data = t.mutable_data();
    for (auto c : coords) {
      const double saved = data[c];
      data[c] = saved + eps;
      const double up = loss().item();
      data[c] = saved - eps;
      const double down = loss().item();
      data[c] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("gradcheck: loss not finite while perturbing " + path + "[" + std::to_string(c) + "]");
      }
      const double numeric = (up - down) / (2.0 * eps);
      check.worst_rel_err = std::max(check.worst_rel_err, relative_error(analytic[c], numeric));
    }
    if (check.worst_rel_err >= report.worst) {
      report.worst = check.worst_rel_err;
      report.worst_path = path;
    }
    report.paths.push_back(std::move(check));
  }
  return report;
}

Tensor probe_loss(const net::ModelOutput& out, std::uint64_t seed) {
  Rng rng(seed ^ 0x5DEECE66DULL);
  // Coefficients scaled by 1/numel keep the loss O(1), so the difference
  // quotient's rounding noise stays well below the relative-error floor.
  auto probe = [&](const Tensor& t) {
    std::vector<double> c(t.numel());
    for (auto& v : c) v = rng.uniform(-1.0, 1.0) / static_cast<double>(t.numel());
    return ops::dot(ops::reshape(t, {t.numel()}), Tensor::from({t.numel()}, std::move(c)));
  };
  if (out.binary.defined()) return probe(out.binary);
  return ops::add(probe(out.speed), probe(out.dir));
}

GradcheckReport gradcheck_model(const net::GraphPlan& plan, const net::ModelConfig& cfg, net::EtdnetParams& params,
                                double eps, std::uint64_t seed) {
  auto loss = [&] { return probe_loss(net::forward(plan, cfg, params, {}), seed); };
  return fd_gradcheck(params.named(), loss, eps, seed);
}

}  // namespace etd::oracle
