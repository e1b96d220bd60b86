#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "etd/etdnet/config.hpp"
#include "etd/etdnet/model.hpp"
#include "etd/etdnet/params.hpp"
#include "etd/numerics/adam.hpp"
#include "json.hpp"

namespace etd::oracle {

inline constexpr double kGradTolerance = 1e-4;
inline constexpr std::size_t kFullCheckLimit = 4096;
inline constexpr std::size_t kSampledCoords = 64;

struct PathCheck {
  std::string path;
  double worst_rel_err = 0.0;
  std::size_t coords = 0;
};

struct GradcheckReport {
  std::vector<PathCheck> paths;
  double worst = 0.0;
  std::string worst_path;

  bool passed(double tol = kGradTolerance) const { return worst < tol; }
  std::vector<std::string> failing(double tol = kGradTolerance) const;
  nlohmann::ordered_json to_json() const;
};

double relative_error(double analytic, double numeric);

// Central differences on every coordinate of tensors up to 4096 scalars, a
// seeded sample of 64 coordinates otherwise. `loss` must rebuild the graph
// from the current parameter values on each call.
GradcheckReport fd_gradcheck(std::vector<NamedTensor>& params, const std::function<Tensor()>& loss,
                             double eps = 1e-5, std::uint64_t seed = 0);

// Fixed random linear probe over every model output; dropout disabled.
Tensor probe_loss(const net::ModelOutput& out, std::uint64_t seed);

GradcheckReport gradcheck_model(const net::GraphPlan& plan, const net::ModelConfig& cfg, net::EtdnetParams& params,
                                double eps = 1e-5, std::uint64_t seed = 0);

}  // namespace etd::oracle
