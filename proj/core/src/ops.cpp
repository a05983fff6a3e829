#include "m2d/ops.hpp"

#include <cmath>
#include <string>

namespace m2d {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, int rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(a.shape()));
  }
}

// Adds g into the sink buffer of `p` when that node participates in the
// backward pass.
void add_grad(GradMap& sink, const NodePtr& p, const std::vector<double>& g) {
  if (!p->tracks_grad()) return;
  auto& buf = sink.accumulate_buffer(p.get());
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  ensure_finite(out, "add");
  NodePtr an = a.node_ptr(), bn = b.node_ptr();
  return Tensor::make_result(a.shape(), std::move(out), {an, bn},
                             [an, bn](const std::vector<double>& g, GradMap& sink) {
                               add_grad(sink, an, g);
                               add_grad(sink, bn, g);
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  ensure_finite(out, "sub");
  NodePtr an = a.node_ptr(), bn = b.node_ptr();
  return Tensor::make_result(a.shape(), std::move(out), {an, bn},
                             [an, bn](const std::vector<double>& g, GradMap& sink) {
                               add_grad(sink, an, g);
                               if (bn->tracks_grad()) {
                                 auto& gb = sink.accumulate_buffer(bn.get());
                                 for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                               }
                             });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  ensure_finite(out, "hadamard");
  NodePtr an = a.node_ptr(), bn = b.node_ptr();
  return Tensor::make_result(a.shape(), std::move(out), {an, bn},
                             [an, bn](const std::vector<double>& g, GradMap& sink) {
                               if (an->tracks_grad()) {
                                 auto& ga = sink.accumulate_buffer(an.get());
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   ga[i] += g[i] * bn->data[i];
                               }
                               if (bn->tracks_grad()) {
                                 auto& gb = sink.accumulate_buffer(bn.get());
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   gb[i] += g[i] * an->data[i];
                               }
                             });
}

Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }

Tensor affine(const Tensor& a, double mul, double shift) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * mul + shift;
  ensure_finite(out, "affine");
  NodePtr an = a.node_ptr();
  return Tensor::make_result(a.shape(), std::move(out), {an},
                             [an, mul](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mul;
                             });
}

// ---------------------------------------------------------------------------
// elementwise functions

Tensor sigmoid(const Tensor& a) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  ensure_finite(out, "sigmoid");
  NodePtr an = a.node_ptr();
  std::vector<double> y = out;
  return Tensor::make_result(a.shape(), std::move(out), {an},
                             [an, y = std::move(y)](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 ga[i] += g[i] * y[i] * (1.0 - y[i]);
                             });
}

Tensor tanh(const Tensor& a) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
  ensure_finite(out, "tanh");
  NodePtr an = a.node_ptr();
  std::vector<double> y = out;
  return Tensor::make_result(a.shape(), std::move(out), {an},
                             [an, y = std::move(y)](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 ga[i] += g[i] * (1.0 - y[i] * y[i]);
                             });
}

Tensor relu(const Tensor& a) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  NodePtr an = a.node_ptr();
  return Tensor::make_result(a.shape(), std::move(out), {an},
                             [an](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 if (an->data[i] > 0.0) ga[i] += g[i];
                             });
}

Tensor log(const Tensor& a) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] <= 0.0) throw NumericError("log: input not strictly positive");
    out[i] = std::log(av[i]);
  }
  ensure_finite(out, "log");
  NodePtr an = a.node_ptr();
  return Tensor::make_result(a.shape(), std::move(out), {an},
                             [an](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 ga[i] += g[i] / an->data[i];
                             });
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = ap[i * k + kk];
      const double* brow = bp + kk * n;
      double* orow = out.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  ensure_finite(out, "matmul");
  NodePtr an = a.node_ptr(), bn = b.node_ptr();
  return Tensor::make_result(
      {m, n}, std::move(out), {an, bn},
      [an, bn, m, k, n](const std::vector<double>& g, GradMap& sink) {
        if (an->tracks_grad()) {
          // dA = G * B^T
          auto& ga = sink.accumulate_buffer(an.get());
          const double* bp = bn->data.data();
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
              const double gv = g[i * n + j];
              const double* brow = bp + j;  // column j of B, stride n
              for (std::int64_t kk = 0; kk < k; ++kk) ga[i * k + kk] += gv * brow[kk * n];
            }
        }
        if (bn->tracks_grad()) {
          // dB = A^T * G
          auto& gb = sink.accumulate_buffer(bn.get());
          const double* ap = an->data.data();
          for (std::int64_t kk = 0; kk < k; ++kk)
            for (std::int64_t i = 0; i < m; ++i) {
              const double av = ap[i * k + kk];
              const double* grow = g.data() + i * n;
              double* gbrow = gb.data() + kk * n;
              for (std::int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear");
  const bool vector_input = x.rank() == 1;
  if (!vector_input) require_rank(x, 2, "linear");
  const std::int64_t n = vector_input ? 1 : x.dim(0);
  const std::int64_t k = vector_input ? x.dim(0) : x.dim(1);
  const std::int64_t m = weight.dim(0);
  if (weight.dim(1) != k) {
    throw DimensionError("linear: weight " + shape_to_string(weight.shape()) +
                         " incompatible with input " + shape_to_string(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m)) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " wants [" +
                         std::to_string(m) + "]");
  }
  const double* xp = x.data().data();
  const double* wp = weight.data().data();
  std::vector<double> out(static_cast<std::size_t>(n * m), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const double* xrow = xp + i * k;
    double* orow = out.data() + i * m;
    if (bias.defined()) {
      const auto& bv = bias.data();
      for (std::int64_t j = 0; j < m; ++j) orow[j] = bv[j];
    }
    for (std::int64_t j = 0; j < m; ++j) {
      const double* wrow = wp + j * k;
      double acc = 0.0;
      for (std::int64_t kk = 0; kk < k; ++kk) acc += xrow[kk] * wrow[kk];
      orow[j] += acc;
    }
  }
  ensure_finite(out, "linear");
  Shape out_shape = vector_input ? Shape{m} : Shape{n, m};
  NodePtr xn = x.node_ptr(), wn = weight.node_ptr();
  NodePtr bn = bias.defined() ? bias.node_ptr() : nullptr;
  std::vector<NodePtr> parents{xn, wn};
  if (bn) parents.push_back(bn);
  return Tensor::make_result(
      std::move(out_shape), std::move(out), std::move(parents),
      [xn, wn, bn, n, k, m](const std::vector<double>& g, GradMap& sink) {
        if (xn->tracks_grad()) {
          auto& gx = sink.accumulate_buffer(xn.get());
          const double* wp = wn->data.data();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < m; ++j) {
              const double gv = g[i * m + j];
              const double* wrow = wp + j * k;
              double* gxrow = gx.data() + i * k;
              for (std::int64_t kk = 0; kk < k; ++kk) gxrow[kk] += gv * wrow[kk];
            }
        }
        if (wn->tracks_grad()) {
          auto& gw = sink.accumulate_buffer(wn.get());
          const double* xp = xn->data.data();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < m; ++j) {
              const double gv = g[i * m + j];
              const double* xrow = xp + i * k;
              double* gwrow = gw.data() + j * k;
              for (std::int64_t kk = 0; kk < k; ++kk) gwrow[kk] += gv * xrow[kk];
            }
        }
        if (bn && bn->tracks_grad()) {
          auto& gb = sink.accumulate_buffer(bn.get());
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
        }
      });
}

Tensor transpose2d(const Tensor& a) {
  require_rank(a, 2, "transpose2d");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  NodePtr an = a.node_ptr();
  return Tensor::make_result({c, r}, std::move(out), {an},
                             [an, r, c](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::int64_t j = 0; j < c; ++j)
                                 for (std::int64_t i = 0; i < r; ++i)
                                   ga[i * c + j] += g[j * r + i];
                             });
}

// ---------------------------------------------------------------------------
// shape

Tensor reshape(const Tensor& a, Shape target) {
  if (shape_numel(target) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                         shape_to_string(target));
  }
  std::vector<double> out = a.data();
  NodePtr an = a.node_ptr();
  return Tensor::make_result(std::move(target), std::move(out), {an},
                             [an](const std::vector<double>& g, GradMap& sink) {
                               add_grad(sink, an, g);
                             });
}

Tensor concat1d(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "concat1d");
  require_rank(b, 1, "concat1d");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out;
  out.reserve(av.size() + bv.size());
  out.insert(out.end(), av.begin(), av.end());
  out.insert(out.end(), bv.begin(), bv.end());
  NodePtr an = a.node_ptr(), bn = b.node_ptr();
  const std::size_t na = av.size();
  const std::int64_t total = static_cast<std::int64_t>(out.size());
  return Tensor::make_result(
      {total}, std::move(out), {an, bn},
      [an, bn, na](const std::vector<double>& g, GradMap& sink) {
        if (an->tracks_grad()) {
          auto& ga = sink.accumulate_buffer(an.get());
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (bn->tracks_grad()) {
          auto& gb = sink.accumulate_buffer(bn.get());
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        }
      });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: row counts differ, " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  const std::int64_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(n * (p + q)));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < p; ++j) out[i * (p + q) + j] = av[i * p + j];
    for (std::int64_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = bv[i * q + j];
  }
  NodePtr an = a.node_ptr(), bn = b.node_ptr();
  return Tensor::make_result(
      {n, p + q}, std::move(out), {an, bn},
      [an, bn, n, p, q](const std::vector<double>& g, GradMap& sink) {
        if (an->tracks_grad()) {
          auto& ga = sink.accumulate_buffer(an.get());
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
        }
        if (bn->tracks_grad()) {
          auto& gb = sink.accumulate_buffer(bn.get());
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
        }
      });
}

Tensor slice1d(const Tensor& a, std::int64_t from, std::int64_t to) {
  require_rank(a, 1, "slice1d");
  if (from < 0 || to > a.dim(0) || from >= to) {
    throw IndexError("slice1d: bad range [" + std::to_string(from) + ", " + std::to_string(to) +
                     ") for " + shape_to_string(a.shape()));
  }
  const auto& av = a.data();
  std::vector<double> out(av.begin() + from, av.begin() + to);
  NodePtr an = a.node_ptr();
  return Tensor::make_result({to - from}, std::move(out), {an},
                             [an, from](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < g.size(); ++i) ga[from + i] += g[i];
                             });
}

Tensor slice_cols(const Tensor& a, std::int64_t from, std::int64_t to) {
  require_rank(a, 2, "slice_cols");
  const std::int64_t n = a.dim(0), m = a.dim(1);
  if (from < 0 || to > m || from >= to) {
    throw IndexError("slice_cols: bad range [" + std::to_string(from) + ", " +
                     std::to_string(to) + ") for " + shape_to_string(a.shape()));
  }
  const std::int64_t w = to - from;
  const auto& av = a.data();
  std::vector<double> out(static_cast<std::size_t>(n * w));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < w; ++j) out[i * w + j] = av[i * m + from + j];
  NodePtr an = a.node_ptr();
  return Tensor::make_result({n, w}, std::move(out), {an},
                             [an, n, m, w, from](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::int64_t i = 0; i < n; ++i)
                                 for (std::int64_t j = 0; j < w; ++j)
                                   ga[i * m + from + j] += g[i * w + j];
                             });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::int64_t>& rows) {
  require_rank(a, 2, "gather_rows");
  const std::int64_t n = a.dim(0), m = a.dim(1);
  for (auto r : rows) {
    if (r < 0 || r >= n) {
      throw IndexError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       shape_to_string(a.shape()));
    }
  }
  const auto& av = a.data();
  std::vector<double> out(rows.size() * static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = av[rows[i] * m + j];
  NodePtr an = a.node_ptr();
  return Tensor::make_result({static_cast<std::int64_t>(rows.size()), m}, std::move(out), {an},
                             [an, rows, m](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < rows.size(); ++i)
                                 for (std::int64_t j = 0; j < m; ++j)
                                   ga[rows[i] * m + j] += g[i * m + j];
                             });
}

Tensor gather1d(const Tensor& a, const std::vector<std::int64_t>& idx) {
  require_rank(a, 1, "gather1d");
  const std::int64_t n = a.dim(0);
  for (auto i : idx) {
    if (i < 0 || i >= n) {
      throw IndexError("gather1d: index " + std::to_string(i) + " out of range for " +
                       shape_to_string(a.shape()));
    }
  }
  const auto& av = a.data();
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = av[idx[i]];
  NodePtr an = a.node_ptr();
  return Tensor::make_result({static_cast<std::int64_t>(idx.size())}, std::move(out), {an},
                             [an, idx](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += g[i];
                             });
}

Tensor select_col(const Tensor& a, std::int64_t col) {
  require_rank(a, 2, "select_col");
  const std::int64_t n = a.dim(0), m = a.dim(1);
  if (col < 0 || col >= m) {
    throw IndexError("select_col: column " + std::to_string(col) + " out of range for " +
                     shape_to_string(a.shape()));
  }
  const auto& av = a.data();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = av[i * m + col];
  NodePtr an = a.node_ptr();
  return Tensor::make_result({n}, std::move(out), {an},
                             [an, n, m, col](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::int64_t i = 0; i < n; ++i) ga[i * m + col] += g[i];
                             });
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw UsageError("stack_scalars: empty input");
  std::vector<double> out(xs.size());
  std::vector<NodePtr> parents;
  parents.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = xs[i].value();
    parents.push_back(xs[i].node_ptr());
  }
  std::vector<NodePtr> captured = parents;
  return Tensor::make_result({static_cast<std::int64_t>(xs.size())}, std::move(out),
                             std::move(parents),
                             [captured](const std::vector<double>& g, GradMap& sink) {
                               for (std::size_t i = 0; i < captured.size(); ++i) {
                                 if (!captured[i]->tracks_grad()) continue;
                                 sink.accumulate_buffer(captured[i].get())[0] += g[i];
                               }
                             });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw UsageError("stack_rows: empty input");
  auto width = [](const Tensor& t) -> std::int64_t {
    if (t.rank() == 1) return t.dim(0);
    if (t.rank() == 2 && t.dim(0) == 1) return t.dim(1);
    throw DimensionError("stack_rows: rows must be [m] or [1 x m], got " +
                         shape_to_string(t.shape()));
  };
  const std::int64_t m = width(rows[0]);
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  std::vector<double> out(static_cast<std::size_t>(n * m));
  std::vector<NodePtr> parents;
  parents.reserve(rows.size());
  for (std::int64_t i = 0; i < n; ++i) {
    if (width(rows[i]) != m) throw DimensionError("stack_rows: inconsistent row widths");
    const auto& rv = rows[i].data();
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = rv[j];
    parents.push_back(rows[i].node_ptr());
  }
  std::vector<NodePtr> captured = parents;
  return Tensor::make_result({n, m}, std::move(out), std::move(parents),
                             [captured, m](const std::vector<double>& g, GradMap& sink) {
                               for (std::size_t i = 0; i < captured.size(); ++i) {
                                 if (!captured[i]->tracks_grad()) continue;
                                 auto& gr = sink.accumulate_buffer(captured[i].get());
                                 for (std::int64_t j = 0; j < m; ++j)
                                   gr[j] += g[i * m + j];
                               }
                             });
}

Tensor repeat_row(const Tensor& v, std::int64_t n) {
  require_rank(v, 1, "repeat_row");
  if (n < 1) throw UsageError("repeat_row: n must be >= 1");
  const std::int64_t m = v.dim(0);
  const auto& vv = v.data();
  std::vector<double> out(static_cast<std::size_t>(n * m));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = vv[j];
  NodePtr vn = v.node_ptr();
  return Tensor::make_result({n, m}, std::move(out), {vn},
                             [vn, n, m](const std::vector<double>& g, GradMap& sink) {
                               if (!vn->tracks_grad()) return;
                               auto& gv = sink.accumulate_buffer(vn.get());
                               for (std::int64_t i = 0; i < n; ++i)
                                 for (std::int64_t j = 0; j < m; ++j) gv[j] += g[i * m + j];
                             });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
  const auto& av = a.data();
  double acc = 0.0;
  for (double v : av) acc += v;
  if (!std::isfinite(acc)) throw NumericError("sum: non-finite result");
  NodePtr an = a.node_ptr();
  return Tensor::make_result({}, {acc}, {an},
                             [an](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (auto& v : ga) v += g[0];
                             });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw UsageError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.numel());
  return scale(sum(a), inv);
}

// ---------------------------------------------------------------------------
// broadcast over rows / constant masks

Tensor mul_rows(const Tensor& a, const Tensor& v) {
  require_rank(a, 2, "mul_rows");
  require_rank(v, 1, "mul_rows");
  const std::int64_t n = a.dim(0), m = a.dim(1);
  if (v.dim(0) != m) {
    throw DimensionError("mul_rows: vector " + shape_to_string(v.shape()) +
                         " does not match row width of " + shape_to_string(a.shape()));
  }
  const auto& av = a.data();
  const auto& vv = v.data();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = av[i * m + j] * vv[j];
  ensure_finite(out, "mul_rows");
  NodePtr an = a.node_ptr(), vn = v.node_ptr();
  return Tensor::make_result(
      {n, m}, std::move(out), {an, vn},
      [an, vn, n, m](const std::vector<double>& g, GradMap& sink) {
        if (an->tracks_grad()) {
          auto& ga = sink.accumulate_buffer(an.get());
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < m; ++j) ga[i * m + j] += g[i * m + j] * vn->data[j];
        }
        if (vn->tracks_grad()) {
          auto& gv = sink.accumulate_buffer(vn.get());
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < m; ++j) gv[j] += g[i * m + j] * an->data[i * m + j];
        }
      });
}

Tensor mask_rows(const Tensor& a, const std::vector<double>& mask01) {
  require_rank(a, 2, "mask_rows");
  const std::int64_t n = a.dim(0), m = a.dim(1);
  if (static_cast<std::int64_t>(mask01.size()) != n) {
    throw DimensionError("mask_rows: mask length " + std::to_string(mask01.size()) +
                         " does not match rows of " + shape_to_string(a.shape()));
  }
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const double mv = mask01[i];
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = av[i * m + j] * mv;
  }
  NodePtr an = a.node_ptr();
  return Tensor::make_result({n, m}, std::move(out), {an},
                             [an, mask01, n, m](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::int64_t i = 0; i < n; ++i) {
                                 const double mv = mask01[i];
                                 if (mv == 0.0) continue;
                                 for (std::int64_t j = 0; j < m; ++j)
                                   ga[i * m + j] += g[i * m + j] * mv;
                               }
                             });
}

Tensor mask_chw(const Tensor& a, const std::vector<double>& mask01) {
  require_rank(a, 3, "mask_chw");
  const std::int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  const std::int64_t plane = h * w;
  if (static_cast<std::int64_t>(mask01.size()) != plane) {
    throw DimensionError("mask_chw: mask length " + std::to_string(mask01.size()) +
                         " does not match H*W of " + shape_to_string(a.shape()));
  }
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (std::int64_t p = 0; p < plane; ++p) out[ci * plane + p] = av[ci * plane + p] * mask01[p];
  NodePtr an = a.node_ptr();
  return Tensor::make_result({c, h, w}, std::move(out), {an},
                             [an, mask01, c, plane](const std::vector<double>& g, GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::int64_t ci = 0; ci < c; ++ci)
                                 for (std::int64_t p = 0; p < plane; ++p)
                                   ga[ci * plane + p] += g[ci * plane + p] * mask01[p];
                             });
}

}  // namespace m2d
