#include "seven/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seven/error.hpp"

namespace seven {

const Tensor& Var::value() const {
  if (!graph_) throw Error("var: use of an unbound variable");
  return graph_->value(id_);
}

Var Graph::constant(Tensor value) {
  return record("constant", std::move(value), {}, nullptr);
}

Var Graph::parameter(Tensor value) {
  Var v = record("parameter", std::move(value), {}, nullptr);
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Graph::record(std::string op, Tensor value, std::vector<std::size_t> inputs,
                  BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [&](std::size_t i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw Error("backward: loss belongs to another graph");
  if (loss.value().size() != 1)
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_string(loss.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

bool Graph::has_grad(Var v) const { return !nodes_.at(v.id()).grad.empty(); }

namespace ops {
namespace {

Graph& same_graph(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.graph() != b.graph())
    throw Error(std::string(op) + ": operands belong to different graphs");
  return *a.graph();
}

Graph& graph_of(Var a, const char* op) {
  if (!a.valid()) throw Error(std::string(op) + ": unbound operand");
  return *a.graph();
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_string(t.shape()));
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += G[m x n] * B[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = b + j * n;
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += grow[p] * brow[p];
      c[i * k + j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * G[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < m; ++p) {
    const double* grow = g + p * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a[p * k + i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  Tensor out({m, n}, 0.0);
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(out), {ia, ib},
                  [m, k, n](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    const auto ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
                    if (gr.requires_grad(ia))
                      gemm_nt(up.data().data(), gr.value(ib).data().data(),
                              gr.grad_buffer(ia).data().data(), m, n, k);
                    if (gr.requires_grad(ib))
                      gemm_tn(gr.value(ia).data().data(), up.data().data(),
                              gr.grad_buffer(ib).data().data(), m, k, n);
                  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return g.record("add", std::move(out), {a.id(), b.id()},
                    [](Graph& gr, std::size_t self) {
                      const Tensor& up = gr.upstream(self);
                      for (auto in : gr.inputs(self)) {
                        if (!gr.requires_grad(in)) continue;
                        Tensor& d = gr.grad_buffer(in);
                        for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i];
                      }
                    });
  }
  const bool bias = av.rank() == 2 && bv.size() == av.cols() &&
                    (bv.rank() == 1 || (bv.rank() == 2 && bv.rows() == 1));
  if (!bias)
    throw ShapeError("add: " + shape_string(av.shape()) + " + " +
                     shape_string(bv.shape()));
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out = av;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  return g.record("add_bias", std::move(out), {a.id(), b.id()},
                  [rows, cols](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    const auto ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
                    if (gr.requires_grad(ia)) {
                      Tensor& d = gr.grad_buffer(ia);
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i];
                    }
                    if (gr.requires_grad(ib)) {
                      Tensor& d = gr.grad_buffer(ib);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) d[c] += up[r * cols + c];
                    }
                  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape())
    throw ShapeError("mul: " + shape_string(av.shape()) + " * " +
                     shape_string(bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record("mul", std::move(out), {a.id(), b.id()},
                  [](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    const auto ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
                    if (gr.requires_grad(ia)) {
                      Tensor& d = gr.grad_buffer(ia);
                      const Tensor& other = gr.value(ib);
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i] * other[i];
                    }
                    if (gr.requires_grad(ib)) {
                      Tensor& d = gr.grad_buffer(ib);
                      const Tensor& other = gr.value(ia);
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i] * other[i];
                    }
                  });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a, "scale");
  Tensor out = a.value();
  for (auto& x : out.data()) x *= factor;
  return g.record("scale", std::move(out), {a.id()},
                  [factor](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * up[i];
                  });
}

Var sum(Var a) {
  Graph& g = graph_of(a, "sum");
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return g.record("sum", Tensor::scalar(total), {a.id()},
                  [](Graph& gr, std::size_t self) {
                    const double up = gr.upstream(self)[0];
                    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
                    for (auto& x : d.data()) x += up;
                  });
}

Var softmax_rows(Var a) {
  Graph& g = graph_of(a, "softmax_rows");
  const Tensor& av = a.value();
  if (av.rank() > 2) throw ShapeError("softmax_rows: " + shape_string(av.shape()));
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= z;
  }
  return g.record("softmax_rows", std::move(out), {a.id()},
                  [rows, cols](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    const Tensor& y = gr.value(self);
                    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t o = r * cols;
                      double dot = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) dot += up[o + c] * y[o + c];
                      for (std::size_t c = 0; c < cols; ++c)
                        d[o + c] += y[o + c] * (up[o + c] - dot);
                    }
                  });
}

Var gelu(Var a) {
  Graph& g = graph_of(a, "gelu");
  Tensor out = a.value();
  for (auto& x : out.data()) x = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  return g.record("gelu", std::move(out), {a.id()}, [](Graph& gr, std::size_t self) {
    const Tensor& up = gr.upstream(self);
    const auto in = gr.inputs(self)[0];
    const Tensor& x = gr.value(in);
    Tensor& d = gr.grad_buffer(in);
    const double inv_sqrt_2pi = std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      d[i] += up[i] * (cdf + v * pdf);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = same_graph(x, gain, "layer_norm");
  same_graph(x, bias, "layer_norm");
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gain.value().size() != cols || bias.value().size() != cols)
    throw ShapeError("layer_norm: input " + shape_string(xv.shape()) + " gain " +
                     shape_string(gain.shape()) + " bias " + shape_string(bias.shape()));
  Tensor normed(xv.shape(), 0.0);
  std::vector<double> inv_std(rows);
  Tensor out(xv.shape(), 0.0);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xv[o + c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xv[o + c] - mean) * (xv[o + c] - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      normed[o + c] = (xv[o + c] - mean) * inv_std[r];
      out[o + c] = normed[o + c] * gv[c] + bv[c];
    }
  }
  return g.record(
      "layer_norm", std::move(out), {x.id(), gain.id(), bias.id()},
      [rows, cols, normed = std::move(normed), inv_std = std::move(inv_std)](
          Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        const auto ix = gr.inputs(self)[0], ig = gr.inputs(self)[1],
                   ib = gr.inputs(self)[2];
        const Tensor& gv = gr.value(ig);
        if (gr.requires_grad(ig)) {
          Tensor& d = gr.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              d[c] += up[r * cols + c] * normed[r * cols + c];
        }
        if (gr.requires_grad(ib)) {
          Tensor& d = gr.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) d[c] += up[r * cols + c];
        }
        if (gr.requires_grad(ix)) {
          Tensor& d = gr.grad_buffer(ix);
          const double n = static_cast<double>(cols);
          std::vector<double> dhat(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t o = r * cols;
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              dhat[c] = up[o + c] * gv[c];
              s1 += dhat[c];
              s2 += dhat[c] * normed[o + c];
            }
            for (std::size_t c = 0; c < cols; ++c)
              d[o + c] += inv_std[r] / n * (n * dhat[c] - s1 - normed[o + c] * s2);
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Graph& g = graph_of(logits, "cross_entropy");
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t rows = lv.rows(), cols = lv.cols();
  if (labels.size() != rows)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(lv.shape()));
  Tensor probs(lv.shape(), 0.0);
  std::vector<int> lab(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= cols)
      throw ShapeError("cross_entropy: label " + std::to_string(lab[r]) +
                       " outside [0, " + std::to_string(cols) + ")");
    const double* row = lv.data().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] = std::exp(row[c] - log_z);
    loss += log_z - row[lab[r]];
  }
  loss /= static_cast<double>(rows);
  return g.record("cross_entropy", Tensor::scalar(loss), {logits.id()},
                  [rows, cols, probs = std::move(probs), lab = std::move(lab)](
                      Graph& gr, std::size_t self) {
                    const double up = gr.upstream(self)[0] / static_cast<double>(rows);
                    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c)
                        d[r * cols + c] += up * probs[r * cols + c];
                      d[r * cols + static_cast<std::size_t>(lab[r])] -= up;
                    }
                  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a, "reshape");
  if (shape_size(shape) != a.value().size())
    throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  Tensor out(std::move(shape), a.value().data());
  return g.record("reshape", std::move(out), {a.id()}, [](Graph& gr, std::size_t self) {
    const Tensor& up = gr.upstream(self);
    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i];
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a, "transpose");
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out({cols, rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = av[r * cols + c];
  return g.record("transpose", std::move(out), {a.id()},
                  [rows, cols](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c)
                        d[r * cols + c] += up[c * rows + r];
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph& g = graph_of(parts[0], "concat_cols");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_graph(parts[0], p, "concat_cols");
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts[0].shape()) +
                       " vs " + shape_string(p.shape()));
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += widths.back();
  }
  Tensor out({rows, total}, 0.0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c)
        out[r * total + offset + c] = pv[r * widths[k] + c];
    offset += widths[k];
  }
  return g.record("concat_cols", std::move(out), std::move(ids),
                  [rows, total, widths = std::move(widths)](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < widths.size(); ++k) {
                      const auto in = gr.inputs(self)[k];
                      if (gr.requires_grad(in)) {
                        Tensor& d = gr.grad_buffer(in);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < widths[k]; ++c)
                            d[r * widths[k] + c] += up[r * total + offset + c];
                      }
                      offset += widths[k];
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph& g = graph_of(parts[0], "concat_rows");
  const std::size_t cols = parts[0].value().cols();
  std::vector<std::size_t> sizes, ids;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    same_graph(parts[0], p, "concat_rows");
    require_matrix(p.value(), "concat_rows");
    if (p.value().cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + shape_string(parts[0].shape()) +
                       " vs " + shape_string(p.shape()));
    sizes.push_back(p.value().size());
    ids.push_back(p.id());
    rows += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Var& p : parts)
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return g.record("concat_rows", Tensor({rows, cols}, std::move(data)), std::move(ids),
                  [sizes = std::move(sizes)](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < sizes.size(); ++k) {
                      const auto in = gr.inputs(self)[k];
                      if (gr.requires_grad(in)) {
                        Tensor& d = gr.grad_buffer(in);
                        for (std::size_t i = 0; i < sizes[k]; ++i) d[i] += up[offset + i];
                      }
                      offset += sizes[k];
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a, "slice_rows");
  const Tensor& av = a.value();
  require_matrix(av, "slice_rows");
  if (begin >= end || end > av.rows())
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") of " + shape_string(av.shape()));
  const std::size_t cols = av.cols();
  std::vector<double> data(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           av.data().begin() + static_cast<std::ptrdiff_t>(end * cols));
  return g.record("slice_rows", Tensor({end - begin, cols}, std::move(data)), {a.id()},
                  [begin, cols](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
                    const std::size_t o = begin * cols;
                    for (std::size_t i = 0; i < up.size(); ++i) d[o + i] += up[i];
                  });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  Graph& g = graph_of(table, "gather_rows");
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  const std::size_t cols = tv.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), cols}, 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= tv.rows())
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " outside table " +
                       shape_string(tv.shape()));
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * cols), cols,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return g.record("gather_rows", std::move(out), {table.id()},
                  [cols, idx = std::move(idx)](Graph& gr, std::size_t self) {
                    const Tensor& up = gr.upstream(self);
                    Tensor& d = gr.grad_buffer(gr.inputs(self)[0]);
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t c = 0; c < cols; ++c)
                        d[idx[r] * cols + c] += up[r * cols + c];
                  });
}

}  // namespace ops
}  // namespace seven
