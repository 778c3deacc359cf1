#include "vlmech/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_set>

#include "vlmech/errors.hpp"

namespace vlmech {

namespace {

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(x.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n], all row-major raw buffers.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range");
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  if (l.len == 0) throw ShapeError("softmax: empty axis");
  return l;
}

void check_positions(std::span<const std::size_t> positions, std::size_t rows) {
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (positions[j] >= rows) {
      throw ValidationError("position " + std::to_string(positions[j]) + " out of range for sequence of length " +
                            std::to_string(rows));
    }
    if (!seen.insert(positions[j]).second) {
      throw ValidationError("duplicate position " + std::to_string(positions[j]));
    }
  }
}

}  // namespace

// ---- pure kernels -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), c.data(), m, k, n);
  return Tensor({m, n}, std::move(c));
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x(i, j);
  return Tensor({n, m}, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return Tensor(a.shape(), std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return Tensor(a.shape(), std::move(out));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return Tensor(a.shape(), std::move(out));
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.values());
  for (double& v : out) v *= c;
  return Tensor(x.shape(), std::move(out));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.numel() != x.cols()) {
    throw ShapeError("add_bias: bias of " + std::to_string(bias.numel()) + " for rows of " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.values());
  const std::size_t c = x.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % c];
  return Tensor(x.shape(), std::move(out));
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisLayout l = axis_layout(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto& in = x.values();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.len * l.inner + i;
      double mx = in[base];
      for (std::size_t k = 1; k < l.len; ++k) mx = std::max(mx, in[base + k * l.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) {
        const double e = std::exp(in[base + k * l.inner] - mx);
        out[base + k * l.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < l.len; ++k) out[base + k * l.inner] /= total;
    }
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor causal_softmax(const Tensor& x) {
  require_rank2(x, "causal_softmax");
  if (x.dim(0) != x.dim(1)) throw ShapeError("causal_softmax: score matrix must be square");
  const std::size_t n = x.dim(0);
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, x(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      out[i * n + j] = std::exp(x(i, j) - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j <= i; ++j) out[i * n + j] /= total;
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t c = x.cols();
  if (c == 0) throw ShapeError("layer_norm: empty last axis");
  if (gain.numel() != c || bias.numel() != c) throw ShapeError("layer_norm: gain/bias length mismatch");
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = gain[j] * ((row[j] - mu) * inv) + bias[j];
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor rotate_pairs(const Tensor& x, const Tensor& cos, const Tensor& sin) {
  require_rank2(x, "rotate_pairs");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (d % 2 != 0) throw ShapeError("rotate_pairs: odd feature width");
  const Shape table{n, d / 2};
  if (cos.shape() != table || sin.shape() != table) {
    throw ShapeError("rotate_pairs: angle tables must be " + shape_string(table));
  }
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double x1 = x(r, 2 * i), x2 = x(r, 2 * i + 1);
      const double c = cos(r, i), s = sin(r, i);
      out[r * d + 2 * i] = x1 * c - x2 * s;
      out[r * d + 2 * i + 1] = x1 * s + x2 * c;
    }
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index) {
  require_rank2(table, "gather_rows");
  const std::size_t c = table.dim(1);
  std::vector<double> out;
  out.reserve(index.size() * c);
  for (std::size_t r : index) {
    if (r >= table.dim(0)) throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range");
    const auto row = table.row(r);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor({index.size(), c}, std::move(out));
}

Tensor scatter_add_rows(const Tensor& base, const Tensor& add, std::span<const std::size_t> positions) {
  require_rank2(base, "scatter_add_rows");
  require_rank2(add, "scatter_add_rows");
  if (add.dim(0) != positions.size()) {
    throw ShapeError("scatter_add_rows: " + std::to_string(add.dim(0)) + " rows for " +
                     std::to_string(positions.size()) + " positions");
  }
  if (add.dim(1) != base.dim(1)) throw ShapeError("scatter_add_rows: feature width mismatch");
  check_positions(positions, base.dim(0));
  std::vector<double> out(base.values());
  const std::size_t c = base.dim(1);
  for (std::size_t j = 0; j < positions.size(); ++j)
    for (std::size_t k = 0; k < c; ++k) out[positions[j] * c + k] += add(j, k);
  return Tensor(base.shape(), std::move(out));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != c) throw ShapeError("concat_rows: column mismatch");
    r += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return Tensor({r, c}, std::move(out));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r) throw ShapeError("concat_cols: row mismatch");
    c += p.dim(1);
  }
  std::vector<double> out;
  out.reserve(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (const Tensor& p : parts) {
      const auto row = p.row(i);
      out.insert(out.end(), row.begin(), row.end());
    }
  return Tensor({r, c}, std::move(out));
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  require_rank2(x, "slice_cols");
  if (start + len > x.dim(1)) throw ShapeError("slice_cols: range out of bounds");
  std::vector<double> out;
  out.reserve(x.dim(0) * len);
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    const auto row = x.row(i).subspan(start, len);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor({x.dim(0), len}, std::move(out));
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets) {
  require_rank2(logits, "cross_entropy_rows");
  if (targets.size() != logits.dim(0)) throw ShapeError("cross_entropy_rows: one target per row required");
  std::vector<double> out(targets.size());
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] >= logits.dim(1)) throw ShapeError("cross_entropy_rows: target out of range");
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - mx);
    out[r] = mx + std::log(total) - row[targets[r]];
  }
  return Tensor({targets.size()}, std::move(out));
}

// ---- tape ops ---------------------------------------------------------------

namespace {

void accumulate(Tape& t, Var v, std::span<const double> g) {
  auto buf = t.grad_buffer(v);
  if (buf.empty()) return;
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  return t.record(matmul(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (auto ga = tp.grad_buffer(a); !ga.empty()) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv(p, j);
          ga[i * k + p] += s;
        }
    }
    if (auto gb = tp.grad_buffer(b); !gb.empty()) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av(i, p);
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var transpose(Tape& t, Var x) {
  return t.record(transpose(t.value(x)), {x}, [x](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    const std::size_t m = tp.value(x).dim(0), n = tp.value(x).dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
  });
}

Var add(Tape& t, Var a, Var b) {
  return t.record(add(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    accumulate(tp, a, g);
    accumulate(tp, b, g);
  });
}

Var mul(Tape& t, Var a, Var b) {
  return t.record(mul(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    if (auto ga = tp.grad_buffer(a); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    if (auto gb = tp.grad_buffer(b); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Var scale(Tape& t, Var x, double c) {
  return t.record(scale(t.value(x), c), {x}, [x, c](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

Var add_bias(Tape& t, Var x, Var bias) {
  return t.record(add_bias(t.value(x), t.value(bias)), {x, bias}, [x, bias](Tape& tp, std::span<const double> g) {
    accumulate(tp, x, g);
    if (auto gb = tp.grad_buffer(bias); !gb.empty()) {
      const std::size_t c = gb.size();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    }
  });
}

Var gelu(Tape& t, Var x) {
  return t.record(gelu(t.value(x)), {x}, [x](Tape& tp, std::span<const double> g) {
    const Tensor& xv = tp.value(x);
    auto gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      gx[i] += g[i] * d;
    }
  });
}

Var softmax(Tape& t, Var x, std::size_t axis) {
  Tensor yv = softmax(t.value(x), axis);
  const AxisLayout l = axis_layout(yv.shape(), axis);
  auto y = std::make_shared<Tensor>(yv);
  return t.record(std::move(yv), {x}, [x, l, y](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.len * l.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) dot += g[base + k * l.inner] * (*y)[base + k * l.inner];
        for (std::size_t k = 0; k < l.len; ++k) {
          const std::size_t idx = base + k * l.inner;
          gx[idx] += (*y)[idx] * (g[idx] - dot);
        }
      }
  });
}

Var causal_softmax(Tape& t, Var x) {
  Tensor yv = causal_softmax(t.value(x));
  const std::size_t n = yv.dim(0);
  auto y = std::make_shared<Tensor>(yv);
  return t.record(std::move(yv), {x}, [x, n, y](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) dot += g[i * n + j] * (*y)(i, j);
      for (std::size_t j = 0; j <= i; ++j) gx[i * n + j] += (*y)(i, j) * (g[i * n + j] - dot);
    }
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  Tensor out = layer_norm(t.value(x), t.value(gain), t.value(bias), eps);
  return t.record(std::move(out), {x, gain, bias}, [x, gain, bias, eps](Tape& tp, std::span<const double> g) {
    const Tensor& xv = tp.value(x);
    const Tensor& gv = tp.value(gain);
    const std::size_t c = xv.cols();
    const double nc = static_cast<double>(c);
    auto gx = tp.grad_buffer(x);
    auto gg = tp.grad_buffer(gain);
    auto gbias = tp.grad_buffer(bias);
    std::vector<double> xhat(c), dxhat(c);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      const auto row = xv.row(r);
      double mu = 0.0;
      for (double v : row) mu += v;
      mu /= nc;
      double var = 0.0;
      for (double v : row) var += (v - mu) * (v - mu);
      var /= nc;
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        xhat[j] = (row[j] - mu) * inv;
        const double gj = g[r * c + j];
        if (!gg.empty()) gg[j] += gj * xhat[j];
        if (!gbias.empty()) gbias[j] += gj;
        dxhat[j] = gj * gv[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xhat[j];
      }
      mean_d /= nc;
      mean_dx /= nc;
      if (!gx.empty())
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += inv * (dxhat[j] - mean_d - xhat[j] * mean_dx);
    }
  });
}

Var rotate_pairs(Tape& t, Var x, const Tensor& cos, const Tensor& sin) {
  auto c = std::make_shared<Tensor>(cos);
  auto s = std::make_shared<Tensor>(sin);
  return t.record(rotate_pairs(t.value(x), cos, sin), {x}, [x, c, s](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    const std::size_t n = tp.value(x).dim(0), d = tp.value(x).dim(1);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < d / 2; ++i) {
        const double g1 = g[r * d + 2 * i], g2 = g[r * d + 2 * i + 1];
        const double cv = (*c)(r, i), sv = (*s)(r, i);
        gx[r * d + 2 * i] += g1 * cv + g2 * sv;
        gx[r * d + 2 * i + 1] += -g1 * sv + g2 * cv;
      }
  });
}

Var gather_rows(Tape& t, Var table, std::vector<std::size_t> index) {
  Tensor out = gather_rows(t.value(table), index);
  return t.record(std::move(out), {table}, [table, index = std::move(index)](Tape& tp, std::span<const double> g) {
    auto gt = tp.grad_buffer(table);
    const std::size_t c = tp.value(table).dim(1);
    for (std::size_t k = 0; k < index.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) gt[index[k] * c + j] += g[k * c + j];
  });
}

Var scatter_add_rows(Tape& t, Var base, Var add, std::vector<std::size_t> positions) {
  Tensor out = scatter_add_rows(t.value(base), t.value(add), positions);
  return t.record(std::move(out), {base, add},
                  [base, add, positions = std::move(positions)](Tape& tp, std::span<const double> g) {
                    accumulate(tp, base, g);
                    if (auto ga = tp.grad_buffer(add); !ga.empty()) {
                      const std::size_t c = tp.value(base).dim(1);
                      for (std::size_t j = 0; j < positions.size(); ++j)
                        for (std::size_t k = 0; k < c; ++k) ga[j * c + k] += g[positions[j] * c + k];
                    }
                  });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (Var p : parts) values.push_back(t.value(p));
  return t.record(concat_rows(values), parts, [parts](Tape& tp, std::span<const double> g) {
    std::size_t offset = 0;
    for (Var p : parts) {
      const std::size_t n = tp.value(p).numel();
      accumulate(tp, p, g.subspan(offset, n));
      offset += n;
    }
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (Var p : parts) values.push_back(t.value(p));
  Tensor out = concat_cols(values);
  const std::size_t total = out.dim(1);
  return t.record(std::move(out), parts, [parts, total](Tape& tp, std::span<const double> g) {
    std::size_t col = 0;
    for (Var p : parts) {
      const std::size_t r = tp.value(p).dim(0), c = tp.value(p).dim(1);
      if (auto gp = tp.grad_buffer(p); !gp.empty())
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + col + j];
      col += c;
    }
  });
}

Var slice_cols(Tape& t, Var x, std::size_t start, std::size_t len) {
  return t.record(slice_cols(t.value(x), start, len), {x}, [x, start, len](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    const std::size_t r = tp.value(x).dim(0), c = tp.value(x).dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) gx[i * c + start + j] += g[i * len + j];
  });
}

Var reshape(Tape& t, Var x, Shape shape) {
  return t.record(t.value(x).reshaped(std::move(shape)), {x},
                  [x](Tape& tp, std::span<const double> g) { accumulate(tp, x, g); });
}

Var cross_entropy_rows(Tape& t, Var logits, std::vector<std::size_t> targets) {
  Tensor out = cross_entropy_rows(t.value(logits), targets);
  return t.record(std::move(out), {logits},
                  [logits, targets = std::move(targets)](Tape& tp, std::span<const double> g) {
                    auto gl = tp.grad_buffer(logits);
                    const Tensor& lv = tp.value(logits);
                    const std::size_t v = lv.dim(1);
                    for (std::size_t r = 0; r < targets.size(); ++r) {
                      const auto row = lv.row(r);
                      const double mx = *std::max_element(row.begin(), row.end());
                      double total = 0.0;
                      for (double x : row) total += std::exp(x - mx);
                      for (std::size_t j = 0; j < v; ++j) {
                        const double p = std::exp(row[j] - mx) / total;
                        gl[r * v + j] += g[r] * (p - (j == targets[r] ? 1.0 : 0.0));
                      }
                    }
                  });
}

Var weighted_sum(Tape& t, Var x, std::vector<double> weights) {
  const Tensor& xv = t.value(x);
  if (weights.size() != xv.numel()) throw ShapeError("weighted_sum: one weight per element required");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * xv[i];
  return t.record(Tensor({1}, {s}), {x}, [x, weights = std::move(weights)](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < weights.size(); ++i) gx[i] += g[0] * weights[i];
  });
}

Var sum(Tape& t, Var x) {
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(Tensor({1}, {s}), {x}, [x](Tape& tp, std::span<const double> g) {
    auto gx = tp.grad_buffer(x);
    for (double& v : gx) v += g[0];
  });
}

Var mean(Tape& t, Var x) {
  const std::size_t n = t.value(x).numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(t, sum(t, x), 1.0 / static_cast<double>(n));
}

}  // namespace vlmech
