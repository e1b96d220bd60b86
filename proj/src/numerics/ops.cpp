#include "etd/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "etd/error.hpp"
#include "etd/numerics/rng.hpp"

namespace etd::ops {
namespace {

using detail::TensorNode;
using BackwardFn = std::function<void(TensorNode&)>;

Tensor make_op(const char* name, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               BackwardFn backward) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->id = detail::next_tensor_id();
  node->op = name;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node_ptr());
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of parent i, or nullptr when that input is a constant.
double* pgrad(TensorNode& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad.data() : nullptr;
}

const double* pdata(TensorNode& self, std::size_t i) { return self.parents[i]->data.data(); }

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename F>
std::vector<double> map_values(const Tensor& x, F f) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_op("matmul", {m, n}, std::move(c), {a, b}, [m, k, n](TensorNode& self) {
    const double* dC = self.grad.data();
    const double* A = pdata(self, 0);
    const double* B = pdata(self, 1);
    if (double* dA = pgrad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* drow = dC + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (double* dB = pgrad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* drow = dC + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* dbrow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * drow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  auto in = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return make_op("transpose", {n, m}, std::move(out), {a}, [m, n](TensorNode& self) {
    double* dA = pgrad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_op("add", a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = pgrad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op("sub", a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op("mul", a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    const double* x = pdata(self, 0);
    const double* y = pdata(self, 1);
    if (double* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    if (double* g = pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  auto out = map_values(a, [factor](double v) { return v * factor; });
  return make_op("scale", a.shape(), std::move(out), {a},
                 [factor](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
                 });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_row");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not fit rows of " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return make_op("add_row", {m, n}, std::move(out), {a, bias}, [m, n](TensorNode& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = pgrad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor mul_col(const Tensor& a, const Tensor& w) {
  const std::size_t m = a.rows(), n = a.numel() / a.rows();
  if (w.numel() != m) {
    throw DimensionError("mul_col: weights " + shape_str(w.shape()) + " do not fit " + shape_str(a.shape()));
  }
  std::vector<double> out(a.numel());
  auto x = a.data(), s = w.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * s[i];
  return make_op("mul_col", a.shape(), std::move(out), {a, w}, [m, n](TensorNode& self) {
    const double* x = pdata(self, 0);
    const double* s = pdata(self, 1);
    if (double* g = pgrad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * s[i];
    if (double* g = pgrad(self, 1))
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j] * x[i * n + j];
        g[i] += acc;
      }
  });
}

Tensor relu(const Tensor& x) {
  auto y = map_values(x, [](double v) { return v > 0.0 ? v : 0.0; });
  return make_op("relu", x.shape(), std::move(y), {x},
                 [](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   const double* in = pdata(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     if (in[i] > 0.0) g[i] += self.grad[i];
                 });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  auto y = map_values(x, [slope](double v) { return v > 0.0 ? v : slope * v; });
  return make_op("leaky_relu", x.shape(), std::move(y), {x},
                 [slope](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   const double* in = pdata(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     g[i] += (in[i] > 0.0 ? 1.0 : slope) * self.grad[i];
                 });
}

Tensor sigmoid(const Tensor& x) {
  auto y = map_values(x, [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return make_op("sigmoid", x.shape(), std::move(y), {x},
                 [](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     const double s = self.data[i];
                     g[i] += s * (1.0 - s) * self.grad[i];
                   }
                 });
}

Tensor dropout(const Tensor& x, double p, const DropoutKey& key, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(x.numel());
  const std::uint64_t base = hash_combine(hash_combine(key.seed, key.epoch), key.site);
  for (std::size_t i = 0; i < factor.size(); ++i) {
    factor[i] = unit_double(splitmix64(base ^ (i * 0x9E3779B97F4A7C15ULL))) < p ? 0.0 : keep_scale;
  }
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * factor[i];
  return make_op("dropout", x.shape(), std::move(out), {x}, [factor = std::move(factor)](TensorNode& self) {
    double* g = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor[i] * self.grad[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < m; ++i) std::copy_n(in.data() + i * w, w, out.data() + i * total + off);
    off += w;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op("concat_cols", {m, total}, std::move(out), std::move(inputs),
                 [m, total, widths](TensorNode& self) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < widths.size(); ++k) {
                     const std::size_t w = widths[k];
                     if (double* g = pgrad(self, k))
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + off + j];
                     off += w;
                   }
                 });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_2d(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto in = a.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(in.data() + i * n + begin, w, out.data() + i * w);
  return make_op("slice_cols", {m, w}, std::move(out), {a}, [m, n, w, begin](TensorNode& self) {
    double* g = pgrad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t m = a.rows(), c = a.numel() / m;
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  std::vector<double> out(index.size() * c);
  auto in = a.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= m) throw DimensionError("gather_rows: row " + std::to_string(index[i]) + " out of range");
    std::copy_n(in.data() + index[i] * c, c, out.data() + i * c);
  }
  Shape shape = a.shape();
  shape[0] = index.size();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op("gather_rows", std::move(shape), std::move(out), {a}, [c, idx = std::move(idx)](TensorNode& self) {
    double* g = pgrad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
  });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index, std::size_t n_rows) {
  const std::size_t e = a.rows(), c = a.numel() / e;
  if (index.size() != e) throw DimensionError("scatter_add_rows: index length differs from row count");
  std::vector<double> out(n_rows * c, 0.0);
  auto in = a.data();
  for (std::size_t i = 0; i < e; ++i) {
    if (index[i] >= n_rows) throw DimensionError("scatter_add_rows: row " + std::to_string(index[i]) + " out of range");
    for (std::size_t j = 0; j < c; ++j) out[index[i] * c + j] += in[i * c + j];
  }
  Shape shape = a.shape();
  shape[0] = n_rows;
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op("scatter_add_rows", std::move(shape), std::move(out), {a},
                 [c, idx = std::move(idx)](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[idx[i] * c + j];
                 });
}

Tensor softmax_rows(const Tensor& x, const std::optional<Mask>& mask) {
  if (x.dim() > 2) throw DimensionError("softmax_rows: expected rank <= 2, got " + shape_str(x.shape()));
  const std::size_t m = x.dim() == 2 ? x.shape()[0] : 1;
  const std::size_t n = x.numel() / m;
  if (mask && mask->shape != x.shape()) {
    throw DimensionError("softmax_rows: mask " + shape_str(mask->shape) + " vs input " + shape_str(x.shape()));
  }
  auto in = x.data();
  std::vector<double> out(in.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !mask->keep[i * n + j]) continue;
      mx = std::max(mx, in[i * n + j]);
      any = true;
    }
    if (!any) throw DegenerateRowError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !mask->keep[i * n + j]) continue;
      out[i * n + j] = std::exp(in[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_op("softmax_rows", x.shape(), std::move(out), {x}, [m, n](TensorNode& self) {
    double* g = pgrad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += self.data[i * n + j] * self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.data[i * n + j] * (self.grad[i * n + j] - s);
    }
  });
}

Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment, std::size_t n_segments) {
  const std::size_t e = scores.numel();
  if (segment.size() != e) throw DimensionError("segment_softmax: segment length differs from score count");
  auto in = scores.data();
  std::vector<double> mx(n_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < e; ++i) {
    if (segment[i] >= n_segments) throw DimensionError("segment_softmax: segment id out of range");
    mx[segment[i]] = std::max(mx[segment[i]], in[i]);
  }
  std::vector<double> out(e), z(n_segments, 0.0);
  for (std::size_t i = 0; i < e; ++i) {
    out[i] = std::exp(in[i] - mx[segment[i]]);
    z[segment[i]] += out[i];
  }
  for (std::size_t i = 0; i < e; ++i) out[i] /= z[segment[i]];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return make_op("segment_softmax", scores.shape(), std::move(out), {scores},
                 [n_segments, seg = std::move(seg)](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   std::vector<double> s(n_segments, 0.0);
                   for (std::size_t i = 0; i < seg.size(); ++i) s[seg[i]] += self.data[i] * self.grad[i];
                   for (std::size_t i = 0; i < seg.size(); ++i) g[i] += self.data[i] * (self.grad[i] - s[seg[i]]);
                 });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_2d(x, "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[i * n + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = in[i * n + j] - lse;
  }
  return make_op("log_softmax_rows", x.shape(), std::move(out), {x}, [m, n](TensorNode& self) {
    double* g = pgrad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += self.grad[i * n + j] - std::exp(self.data[i * n + j]) * s;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (d == 0) throw DimensionError("layer_norm: zero feature width");
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match width of " + shape_str(x.shape()));
  }
  const std::size_t m = x.numel() / d;
  auto in = x.data(), gv = gain.data(), bv = bias.data();
  std::vector<double> out(in.size()), xhat(in.size()), inv(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  return make_op("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                 [m, d, xhat = std::move(xhat), inv = std::move(inv)](TensorNode& self) {
                   const double* gv = pdata(self, 1);
                   const double* dy = self.grad.data();
                   if (double* gx = pgrad(self, 0)) {
                     for (std::size_t i = 0; i < m; ++i) {
                       double mean_g = 0.0, mean_gx = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = dy[i * d + j] * gv[j];
                         mean_g += dxh;
                         mean_gx += dxh * xhat[i * d + j];
                       }
                       mean_g /= static_cast<double>(d);
                       mean_gx /= static_cast<double>(d);
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = dy[i * d + j] * gv[j];
                         gx[i * d + j] += inv[i] * (dxh - mean_g - xhat[i * d + j] * mean_gx);
                       }
                     }
                   }
                   if (double* gg = pgrad(self, 1))
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < d; ++j) gg[j] += dy[i * d + j] * xhat[i * d + j];
                   if (double* gb = pgrad(self, 2))
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < d; ++j) gb[j] += dy[i * d + j];
                 });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op("sum", {1}, {s}, {x}, [](TensorNode& self) {
    double* g = pgrad(self, 0);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("dot: size mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double s = 0.0;
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return make_op("dot", {1}, {s}, {a, b}, [](TensorNode& self) {
    const double* x = pdata(self, 0);
    const double* y = pdata(self, 1);
    const std::size_t n = self.parents[0]->data.size();
    if (double* g = pgrad(self, 0))
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0] * y[i];
    if (double* g = pgrad(self, 1))
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0] * x[i];
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> column) {
  require_2d(x, "pick");
  const std::size_t m = x.rows(), n = x.cols();
  if (column.size() != m) throw DimensionError("pick: one column index per row required");
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (column[i] >= n) throw DimensionError("pick: column " + std::to_string(column[i]) + " out of range");
    out[i] = x.data()[i * n + column[i]];
  }
  std::vector<std::size_t> col(column.begin(), column.end());
  return make_op("pick", {m}, std::move(out), {x}, [n, col = std::move(col)](TensorNode& self) {
    double* g = pgrad(self, 0);
    for (std::size_t i = 0; i < col.size(); ++i) g[i * n + col[i]] += self.grad[i];
  });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  if (targets.size() != logits.numel()) throw DimensionError("bce_with_logits: one target per logit required");
  auto z = logits.data();
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  std::vector<double> y(targets.begin(), targets.end());
  return make_op("bce_with_logits", logits.shape(), std::move(out), {logits}, [y = std::move(y)](TensorNode& self) {
    double* g = pgrad(self, 0);
    const double* z = pdata(self, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double s = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      g[i] += self.grad[i] * (s - y[i]);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  return make_op("reshape", std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x},
                 [](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                 });
}

Tensor scale_grad(const Tensor& x, double factor) {
  return make_op("scale_grad", x.shape(), std::vector<double>(x.data().begin(), x.data().end()), {x},
                 [factor](TensorNode& self) {
                   double* g = pgrad(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
                 });
}

}  // namespace etd::ops
