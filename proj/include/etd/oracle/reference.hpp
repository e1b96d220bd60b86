#pragma once

// Tape-free re-derivations of the model used as test oracles. Nothing here
// calls into the model's forward code; neighborhoods and predecessor windows
// are recomputed from the raw edge lists.

#include <vector>

#include "etd/etdnet/config.hpp"
#include "etd/etdnet/params.hpp"
#include "etd/fhgraph/graph.hpp"

namespace etd::oracle {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t);

// m^D via a global N x N score matrix with -inf outside N_D.
Matrix dense_sa_reference(const fhg::FullHistoryGraph& g, const Matrix& h, const net::EtdnetParams& p,
                          const net::ModelConfig& cfg, std::size_t layer);

// m^H via a B x B attention per node over a zero-padded window, padded
// rows and columns masked to -inf.
Matrix dense_ha_reference(const fhg::FullHistoryGraph& g, const Matrix& h, const net::EtdnetParams& p,
                          const net::ModelConfig& cfg, std::size_t layer);

// Predecessor window recomputed by forward reachability over timesteps.
std::vector<std::size_t> reference_window(const fhg::FullHistoryGraph& g, std::size_t node, std::size_t window);

struct ReferenceOutput {
  Matrix embedding;
  Matrix speed;
  Matrix dir;
  std::vector<double> binary;
};

// The whole model (every mode, eval mode) written as one straight pass of loops.
ReferenceOutput straight_line_forward(const fhg::FullHistoryGraph& g, const net::ModelConfig& cfg,
                                      const net::EtdnetParams& p);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Tensor& b);

}  // namespace etd::oracle
