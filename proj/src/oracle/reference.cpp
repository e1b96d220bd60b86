#include "etd/oracle/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "etd/error.hpp"

namespace etd::oracle {
namespace {

using Vec = std::vector<double>;
using net::EtdnetParams;
using net::ModelConfig;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// y = W x with W stored [out x in]
Vec matvec(const Tensor& w, const Vec& x) {
  const std::size_t rows = w.shape()[0], cols = w.shape()[1];
  Vec y(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += w.at(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// y = x M with M stored [in x out]
Vec vecmat(const Vec& x, const Tensor& m) {
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  Vec y(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += x[i] * m.at(i, j);
    y[j] = s;
  }
  return y;
}

double dotv(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

Vec layer_norm(const Vec& x, const Tensor& gain, const Tensor& bias) {
  const double n = static_cast<double>(x.size());
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain.data()[i] * (x[i] - mu) * inv + bias.data()[i];
  return y;
}

Vec add_bias(Vec x, const Tensor& b) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += b.data()[i];
  return x;
}

Vec relu(Vec x) {
  for (auto& v : x) v = v > 0.0 ? v : 0.0;
  return x;
}

Vec concat(std::initializer_list<const Vec*> parts) {
  Vec out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

// softmax over the finite entries of s, weighted by multiplicity c
Vec masked_softmax(const Vec& s, const Vec& c) {
  double mx = kNegInf;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (c[j] > 0.0) mx = std::max(mx, s[j]);
  }
  Vec w(s.size(), 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (c[j] > 0.0) {
      w[j] = c[j] * std::exp(s[j] - mx);
      z += w[j];
    }
  }
  for (auto& v : w) v /= z;
  return w;
}

Matrix rows_times(const Matrix& h, const Tensor& w) {
  Matrix out;
  out.reserve(h.size());
  for (const auto& row : h) out.push_back(matvec(w, row));
  return out;
}

Vec mean_pool_node(const Matrix& h, const std::vector<std::size_t>& preds, const EtdnetParams& p, std::size_t layer) {
  const std::size_t d = h[0].size();
  Vec mean(d, 0.0);
  for (auto w : preds) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += h[w][j];
  }
  for (auto& v : mean) v /= static_cast<double>(preds.size());
  return layer_norm(matvec(p.at(net::ha_path(layer, "mean_proj")), mean), p.at(net::ha_path(layer, "ln_gain")),
                    p.at(net::ha_path(layer, "ln_bias")));
}

Matrix fuse(const Matrix& h, const Matrix& md, const Matrix& mh, const EtdnetParams& p, std::size_t layer,
            const std::string& branch) {
  Matrix out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    Vec z = relu(matvec(p.at(net::fl_path(layer, branch, "F")), concat({&h[i], &md[i], &mh[i]})));
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += h[i][j];
    out[i] = layer_norm(z, p.at(net::fl_path(layer, branch, "ln_gain")), p.at(net::fl_path(layer, branch, "ln_bias")));
  }
  return out;
}

Matrix mean_pool_reference(const fhg::FullHistoryGraph& g, const Matrix& h, const EtdnetParams& p,
                           const ModelConfig& cfg, std::size_t layer) {
  Matrix out(h.size(), Vec(cfg.d, 0.0));
  for (std::size_t u = 0; u < h.size(); ++u) {
    auto preds = reference_window(g, u, cfg.window);
    if (!preds.empty()) out[u] = mean_pool_node(h, preds, p, layer);
  }
  return out;
}

}  // namespace

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  }
  return m;
}

Matrix dense_sa_reference(const fhg::FullHistoryGraph& g, const Matrix& h, const EtdnetParams& p,
                          const ModelConfig& cfg, std::size_t layer) {
  const std::size_t n = g.num_nodes();
  const std::size_t ds = cfg.sa_head_dim();
  // count[u][v] = number of Intra edges v -> u
  Matrix count(n, Vec(n, 0.0));
  for (const auto& e : g.intra_edges()) count[g.index_of(e.dst)][g.index_of(e.src)] += 1.0;

  Matrix cur = h;
  for (std::size_t k = 0; k < cfg.sa_sublayers; ++k) {
    Matrix heads(n);
    for (std::size_t r = 0; r < cfg.sa_heads; ++r) {
      Matrix q = rows_times(cur, p.at(net::sa_head_path(layer, k, r, "WQ")));
      Matrix kk = rows_times(cur, p.at(net::sa_head_path(layer, k, r, "WK")));
      Matrix v = rows_times(cur, p.at(net::sa_head_path(layer, k, r, "WV")));
      const double* a = p.at(net::sa_head_path(layer, k, r, "a")).data().data();
      Matrix scores(n, Vec(n, kNegInf));
      for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t w = 0; w < n; ++w) {
          if (count[u][w] == 0.0) continue;
          const double e = dotv(a, q[u].data(), ds) + dotv(a + ds, kk[w].data(), ds);
          scores[u][w] = e > 0.0 ? e : cfg.leaky_slope * e;
        }
      }
      for (std::size_t u = 0; u < n; ++u) {
        Vec agg(ds, 0.0);
        const bool any = std::any_of(count[u].begin(), count[u].end(), [](double c) { return c > 0.0; });
        if (any) {
          Vec alpha = masked_softmax(scores[u], count[u]);
          for (std::size_t w = 0; w < n; ++w) {
            for (std::size_t j = 0; j < ds; ++j) agg[j] += alpha[w] * v[w][j];
          }
        }
        heads[u].insert(heads[u].end(), agg.begin(), agg.end());
      }
    }
    Matrix next(n);
    for (std::size_t u = 0; u < n; ++u) {
      Vec o = matvec(p.at(net::sa_path(layer, k, "O")), heads[u]);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += cur[u][j];
      next[u] = layer_norm(o, p.at(net::sa_path(layer, k, "ln_gain")), p.at(net::sa_path(layer, k, "ln_bias")));
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<std::size_t> reference_window(const fhg::FullHistoryGraph& g, std::size_t node, std::size_t window) {
  const auto& target = g.node(node).id;
  if (target.is_static()) return {};
  // frontier holds nodes exactly `hop` Inter steps before the target
  std::set<std::size_t> frontier{node};
  std::vector<std::size_t> found;
  for (std::size_t hop = 1; hop <= window && !frontier.empty(); ++hop) {
    std::set<std::size_t> prev;
    for (const auto& e : g.inter_edges()) {
      if (frontier.count(g.index_of(e.dst))) prev.insert(g.index_of(e.src));
    }
    found.insert(found.end(), prev.begin(), prev.end());
    frontier = std::move(prev);
  }
  std::sort(found.begin(), found.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = g.node(a).id;
    const auto& y = g.node(b).id;
    if (*x.t != *y.t) return *x.t < *y.t;
    return x.entity < y.entity;
  });
  found.erase(std::unique(found.begin(), found.end()), found.end());
  if (found.size() > window) found.erase(found.begin(), found.end() - static_cast<std::ptrdiff_t>(window));
  return found;
}

Matrix dense_ha_reference(const fhg::FullHistoryGraph& g, const Matrix& h, const EtdnetParams& p,
                          const ModelConfig& cfg, std::size_t layer) {
  const std::size_t n = g.num_nodes();
  const std::size_t d = cfg.d;
  const std::size_t b = cfg.window;
  const std::size_t dh = cfg.ha_head_dim();
  Matrix out(n, Vec(d, 0.0));
  for (std::size_t u = 0; u < n; ++u) {
    auto preds = reference_window(g, u, b);
    const std::size_t m = preds.size();
    if (m == 0) continue;
    Matrix z(b, Vec(d, 0.0));
    for (std::size_t i = 0; i < m; ++i) z[i] = h[preds[i]];
    Vec heads;
    for (std::size_t r = 0; r < cfg.ha_heads; ++r) {
      Matrix q = rows_times(z, p.at(net::ha_head_path(layer, r, "WQ")));
      Matrix k = rows_times(z, p.at(net::ha_head_path(layer, r, "WK")));
      Matrix v = rows_times(z, p.at(net::ha_head_path(layer, r, "WV")));
      Matrix a(b, Vec(b, kNegInf));
      Matrix valid(b, Vec(b, 0.0));
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          if (i < m && j < m) {
            a[i][j] = dotv(q[i].data(), k[j].data(), dh) / std::sqrt(static_cast<double>(dh));
            valid[i][j] = 1.0;
          }
        }
      }
      Vec row = masked_softmax(a[m - 1], valid[m - 1]);
      Vec o(dh, 0.0);
      for (std::size_t j = 0; j < b; ++j) {
        for (std::size_t c = 0; c < dh; ++c) o[c] += row[j] * v[j][c];
      }
      heads.insert(heads.end(), o.begin(), o.end());
    }
    out[u] = layer_norm(vecmat(heads, p.at(net::ha_path(layer, "O"))), p.at(net::ha_path(layer, "ln_gain")),
                        p.at(net::ha_path(layer, "ln_bias")));
  }
  return out;
}

ReferenceOutput straight_line_forward(const fhg::FullHistoryGraph& g, const ModelConfig& cfg, const EtdnetParams& p) {
  const std::size_t n = g.num_nodes();
  if (n == 0) throw ContractError("forward on an empty graph");
  Matrix h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = add_bias(matvec(p.at("input/W"), g.node(i).features), p.at("input/b"));
  const Matrix zero(n, Vec(cfg.d, 0.0));

  auto history = [&](const Matrix& x, std::size_t l) {
    return cfg.mode == net::Mode::HAMeanPool ? mean_pool_reference(g, x, p, cfg, l)
                                             : dense_ha_reference(g, x, p, cfg, l);
  };

  if (cfg.mode == net::Mode::LateFusion) {
    Matrix hs = h, hh = h;
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
      hs = fuse(hs, dense_sa_reference(g, hs, p, cfg, l), zero, p, l, "fl");
      hh = fuse(hh, zero, history(hh, l), p, l, "fl_ha");
    }
    for (std::size_t i = 0; i < n; ++i) h[i] = add_bias(matvec(p.at("late/W"), concat({&hs[i], &hh[i]})), p.at("late/b"));
  } else {
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
      Matrix md = cfg.uses_sa() ? dense_sa_reference(g, h, p, cfg, l) : zero;
      Matrix mh = cfg.uses_ha() ? history(h, l) : zero;
      h = fuse(h, md, mh, p, l, "fl");
    }
  }

  ReferenceOutput out;
  out.embedding = h;
  for (std::size_t i = 0; i < n; ++i) {
    Vec hidden = relu(add_bias(matvec(p.at("head/hidden_W"), h[i]), p.at("head/hidden_b")));
    if (cfg.head == net::HeadKind::DualClass) {
      out.speed.push_back(add_bias(matvec(p.at("head/speed_W"), hidden), p.at("head/speed_b")));
      out.dir.push_back(add_bias(matvec(p.at("head/dir_W"), hidden), p.at("head/dir_b")));
    } else {
      out.binary.push_back(add_bias(matvec(p.at("head/out_W"), hidden), p.at("head/out_b"))[0]);
    }
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      const double d = std::abs(a[i][j] - b[i][j]);
      if (std::isnan(d)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, d);
    }
  }
  return worst;
}

double max_abs_diff(const Matrix& a, const Tensor& b) { return max_abs_diff(a, to_matrix(b)); }

}  // namespace etd::oracle
