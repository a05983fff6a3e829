#include <algorithm>
#include <cmath>

#include "m2d/ops.hpp"

namespace m2d {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// ---------------------------------------------------------------------------
// l2_normalize

Tensor l2_normalize(const Tensor& a, int axis) {
  const auto& s = a.shape();
  if (axis < 0 || axis >= a.rank()) {
    throw IndexError("l2_normalize: axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(s));
  }
  const std::int64_t len = s[axis];
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < a.rank(); ++i) inner *= s[i];

  const auto& av = a.data();
  std::vector<double> out(av.size());
  std::vector<double> norms(static_cast<std::size_t>(outer * inner));
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      double sq = 0.0;
      for (std::int64_t l = 0; l < len; ++l) {
        const double v = av[(o * len + l) * inner + in];
        sq += v * v;
      }
      const double r = std::sqrt(sq);
      norms[o * inner + in] = r;
      for (std::int64_t l = 0; l < len; ++l) {
        const std::size_t idx = (o * len + l) * inner + in;
        out[idx] = r == 0.0 ? av[idx] : av[idx] / r;  // zero slices pass through
      }
    }
  }
  ensure_finite(out, "l2_normalize");
  NodePtr an = a.node_ptr();
  std::vector<double> y = out;
  return Tensor::make_result(
      s, std::move(out), {an},
      [an, y = std::move(y), norms = std::move(norms), outer, inner,
       len](const std::vector<double>& g, GradMap& sink) {
        if (!an->tracks_grad()) return;
        auto& ga = sink.accumulate_buffer(an.get());
        for (std::int64_t o = 0; o < outer; ++o) {
          for (std::int64_t in = 0; in < inner; ++in) {
            const double r = norms[o * inner + in];
            if (r == 0.0) {
              for (std::int64_t l = 0; l < len; ++l) {
                const std::size_t idx = (o * len + l) * inner + in;
                ga[idx] += g[idx];
              }
              continue;
            }
            double dot = 0.0;
            for (std::int64_t l = 0; l < len; ++l) {
              const std::size_t idx = (o * len + l) * inner + in;
              dot += g[idx] * y[idx];
            }
            for (std::int64_t l = 0; l < len; ++l) {
              const std::size_t idx = (o * len + l) * inner + in;
              ga[idx] += (g[idx] - y[idx] * dot) / r;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// max pooling over row segments

Tensor segment_max(const Tensor& a, std::int64_t x, std::int64_t y) {
  if (a.rank() != 2) {
    throw DimensionError("segment_max: expected [N x d], got " + shape_to_string(a.shape()));
  }
  const std::int64_t n = a.dim(0), d = a.dim(1);
  if (x > y) {
    throw IndexError("segment_max: start " + std::to_string(x) + " exceeds end " +
                     std::to_string(y));
  }
  if (x < 0 || y >= n) {
    throw IndexError("segment_max: range [" + std::to_string(x) + ", " + std::to_string(y) +
                     "] outside of " + std::to_string(n) + " rows");
  }
  const auto& av = a.data();
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(d), x);
  for (std::int64_t c = 0; c < d; ++c) out[c] = av[x * d + c];
  for (std::int64_t r = x + 1; r <= y; ++r) {
    for (std::int64_t c = 0; c < d; ++c) {
      const double v = av[r * d + c];
      if (v > out[c]) {  // strict: first maximal row wins ties
        out[c] = v;
        argmax[c] = r;
      }
    }
  }
  NodePtr an = a.node_ptr();
  return Tensor::make_result({d}, std::move(out), {an},
                             [an, argmax = std::move(argmax), d](const std::vector<double>& g,
                                                                 GradMap& sink) {
                               if (!an->tracks_grad()) return;
                               auto& ga = sink.accumulate_buffer(an.get());
                               for (std::int64_t c = 0; c < d; ++c) ga[argmax[c] * d + c] += g[c];
                             });
}

Tensor group_max_rows(const Tensor& a,
                      const std::vector<std::pair<std::int64_t, std::int64_t>>& groups) {
  if (a.rank() != 2) {
    throw DimensionError("group_max_rows: expected [N x d], got " + shape_to_string(a.shape()));
  }
  const std::int64_t n = a.dim(0), d = a.dim(1);
  const std::int64_t ng = static_cast<std::int64_t>(groups.size());
  const auto& av = a.data();
  std::vector<double> out(static_cast<std::size_t>(ng * d), 0.0);
  // argmax row per output cell; -1 marks padding (no gradient)
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(ng * d), -1);
  for (std::int64_t gi = 0; gi < ng; ++gi) {
    const auto [lo, hi] = groups[gi];
    if (lo > hi) continue;  // padding group -> zero row
    if (lo < 0 || hi >= n) {
      throw IndexError("group_max_rows: group [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "] outside of " + std::to_string(n) + " rows");
    }
    for (std::int64_t c = 0; c < d; ++c) {
      out[gi * d + c] = av[lo * d + c];
      argmax[gi * d + c] = lo;
    }
    for (std::int64_t r = lo + 1; r <= hi; ++r) {
      for (std::int64_t c = 0; c < d; ++c) {
        const double v = av[r * d + c];
        if (v > out[gi * d + c]) {
          out[gi * d + c] = v;
          argmax[gi * d + c] = r;
        }
      }
    }
  }
  NodePtr an = a.node_ptr();
  return Tensor::make_result(
      {ng, d}, std::move(out), {an},
      [an, argmax = std::move(argmax), d](const std::vector<double>& g, GradMap& sink) {
        if (!an->tracks_grad()) return;
        auto& ga = sink.accumulate_buffer(an.get());
        for (std::size_t i = 0; i < argmax.size(); ++i) {
          if (argmax[i] < 0) continue;
          ga[argmax[i] * d + static_cast<std::int64_t>(i) % d] += g[i];
        }
      });
}

Tensor upper_tri_max_map(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("upper_tri_max_map: expected [N x d], got " + shape_to_string(a.shape()));
  }
  const std::int64_t n = a.dim(0), d = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(static_cast<std::size_t>(n * n * d), 0.0);
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(n * n * d), -1);
  // Running max along y for each start row x: cell (x, y) extends (x, y-1).
  std::vector<double> run(static_cast<std::size_t>(d));
  std::vector<std::int32_t> runidx(static_cast<std::size_t>(d));
  for (std::int64_t x = 0; x < n; ++x) {
    for (std::int64_t c = 0; c < d; ++c) {
      run[c] = av[x * d + c];
      runidx[c] = static_cast<std::int32_t>(x);
    }
    for (std::int64_t y = x; y < n; ++y) {
      if (y > x) {
        for (std::int64_t c = 0; c < d; ++c) {
          const double v = av[y * d + c];
          if (v > run[c]) {
            run[c] = v;
            runidx[c] = static_cast<std::int32_t>(y);
          }
        }
      }
      const std::size_t base = static_cast<std::size_t>((x * n + y) * d);
      for (std::int64_t c = 0; c < d; ++c) {
        out[base + c] = run[c];
        argmax[base + c] = runidx[c];
      }
    }
  }
  NodePtr an = a.node_ptr();
  return Tensor::make_result(
      {n, n, d}, std::move(out), {an},
      [an, argmax = std::move(argmax), n, d](const std::vector<double>& g, GradMap& sink) {
        if (!an->tracks_grad()) return;
        auto& ga = sink.accumulate_buffer(an.get());
        for (std::int64_t x = 0; x < n; ++x) {
          for (std::int64_t y = x; y < n; ++y) {
            const std::size_t base = static_cast<std::size_t>((x * n + y) * d);
            for (std::int64_t c = 0; c < d; ++c) {
              ga[argmax[base + c] * d + c] += g[base + c];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 3) {
    throw DimensionError("conv2d: input must be [C x H x W], got " +
                         shape_to_string(input.shape()));
  }
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw DimensionError("conv2d: kernels must be [C' x C x k x k], got " +
                         shape_to_string(kernels.shape()));
  }
  const std::int64_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t c_out = kernels.dim(0), k = kernels.dim(2);
  if (k % 2 == 0) {
    throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
  }
  if (kernels.dim(1) != c_in) {
    throw DimensionError("conv2d: kernels " + shape_to_string(kernels.shape()) +
                         " do not match input channels of " + shape_to_string(input.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != c_out) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(c_out) + "], got " +
                         shape_to_string(bias.shape()));
  }
  const std::int64_t pad = (k - 1) / 2;
  const std::int64_t plane = h * w;
  const double* in = input.data().data();
  const double* ker = kernels.data().data();
  const auto& bv = bias.data();

  std::vector<double> out(static_cast<std::size_t>(c_out * plane));
  for (std::int64_t co = 0; co < c_out; ++co) {
    double* oplane = out.data() + co * plane;
    std::fill(oplane, oplane + plane, bv[co]);
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
      const double* iplane = in + ci * plane;
      const double* kbase = ker + (co * c_in + ci) * k * k;
      for (std::int64_t ky = 0; ky < k; ++ky) {
        const std::int64_t oy_lo = std::max<std::int64_t>(0, pad - ky);
        const std::int64_t oy_hi = std::min(h, h + pad - ky);
        for (std::int64_t kx = 0; kx < k; ++kx) {
          const double kv = kbase[ky * k + kx];
          if (kv == 0.0) continue;
          const std::int64_t ox_lo = std::max<std::int64_t>(0, pad - kx);
          const std::int64_t ox_hi = std::min(w, w + pad - kx);
          for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
            const double* irow = iplane + (oy + ky - pad) * w + (kx - pad);
            double* orow = oplane + oy * w;
            for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += kv * irow[ox];
          }
        }
      }
    }
  }
  ensure_finite(out, "conv2d");

  NodePtr in_n = input.node_ptr(), k_n = kernels.node_ptr(), b_n = bias.node_ptr();
  return Tensor::make_result(
      {c_out, h, w}, std::move(out), {in_n, k_n, b_n},
      [in_n, k_n, b_n, c_in, c_out, h, w, k, pad, plane](const std::vector<double>& g,
                                                         GradMap& sink) {
        const double* ker = k_n->data.data();
        const double* in = in_n->data.data();
        if (b_n->tracks_grad()) {
          auto& gb = sink.accumulate_buffer(b_n.get());
          for (std::int64_t co = 0; co < c_out; ++co) {
            double acc = 0.0;
            const double* gplane = g.data() + co * plane;
            for (std::int64_t p = 0; p < plane; ++p) acc += gplane[p];
            gb[co] += acc;
          }
        }
        if (k_n->tracks_grad()) {
          auto& gk = sink.accumulate_buffer(k_n.get());
          for (std::int64_t co = 0; co < c_out; ++co) {
            const double* gplane = g.data() + co * plane;
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
              const double* iplane = in + ci * plane;
              double* gkbase = gk.data() + (co * c_in + ci) * k * k;
              for (std::int64_t ky = 0; ky < k; ++ky) {
                const std::int64_t oy_lo = std::max<std::int64_t>(0, pad - ky);
                const std::int64_t oy_hi = std::min(h, h + pad - ky);
                for (std::int64_t kx = 0; kx < k; ++kx) {
                  const std::int64_t ox_lo = std::max<std::int64_t>(0, pad - kx);
                  const std::int64_t ox_hi = std::min(w, w + pad - kx);
                  double acc = 0.0;
                  for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                    const double* irow = iplane + (oy + ky - pad) * w + (kx - pad);
                    const double* grow = gplane + oy * w;
                    for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) acc += grow[ox] * irow[ox];
                  }
                  gkbase[ky * k + kx] += acc;
                }
              }
            }
          }
        }
        if (in_n->tracks_grad()) {
          auto& gi = sink.accumulate_buffer(in_n.get());
          for (std::int64_t co = 0; co < c_out; ++co) {
            const double* gplane = g.data() + co * plane;
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
              double* giplane = gi.data() + ci * plane;
              const double* kbase = ker + (co * c_in + ci) * k * k;
              for (std::int64_t ky = 0; ky < k; ++ky) {
                const std::int64_t oy_lo = std::max<std::int64_t>(0, pad - ky);
                const std::int64_t oy_hi = std::min(h, h + pad - ky);
                for (std::int64_t kx = 0; kx < k; ++kx) {
                  const double kv = kbase[ky * k + kx];
                  if (kv == 0.0) continue;
                  const std::int64_t ox_lo = std::max<std::int64_t>(0, pad - kx);
                  const std::int64_t ox_hi = std::min(w, w + pad - kx);
                  for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                    double* girow = giplane + (oy + ky - pad) * w + (kx - pad);
                    const double* grow = gplane + oy * w;
                    for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) girow[ox] += kv * grow[ox];
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// LSTM cell

LstmState lstm_cell(const Tensor& x, const LstmState& state, const LstmParams& params) {
  const bool vector_input = x.rank() == 1;
  Tensor xr = vector_input ? reshape(x, {1, x.dim(0)}) : x;
  Tensor hr = vector_input ? reshape(state.h, {1, state.h.dim(0)}) : state.h;
  Tensor cr = vector_input ? reshape(state.c, {1, state.c.dim(0)}) : state.c;
  if (xr.rank() != 2 || hr.rank() != 2 || cr.rank() != 2) {
    throw DimensionError("lstm_cell: x, h, c must be vectors or row batches");
  }
  const std::int64_t d_in = xr.dim(1);
  const std::int64_t hdim = hr.dim(1);
  if (params.w_ih.rank() != 2 || params.w_ih.dim(0) != 4 * hdim || params.w_ih.dim(1) != d_in ||
      params.w_hh.rank() != 2 || params.w_hh.dim(0) != 4 * hdim || params.w_hh.dim(1) != hdim ||
      params.b.rank() != 1 || params.b.dim(0) != 4 * hdim) {
    throw DimensionError("lstm_cell: parameter shapes inconsistent with input " +
                         shape_to_string(xr.shape()) + " and hidden " +
                         shape_to_string(hr.shape()));
  }
  if (cr.dim(1) != hdim || hr.dim(0) != xr.dim(0) || cr.dim(0) != xr.dim(0)) {
    throw DimensionError("lstm_cell: state shapes do not match input rows");
  }

  Tensor gates = add(linear(xr, params.w_ih, params.b), linear(hr, params.w_hh));
  Tensor gi = sigmoid(slice_cols(gates, 0, hdim));
  Tensor gf = sigmoid(slice_cols(gates, hdim, 2 * hdim));
  Tensor gg = tanh(slice_cols(gates, 2 * hdim, 3 * hdim));
  Tensor go = sigmoid(slice_cols(gates, 3 * hdim, 4 * hdim));
  Tensor c_next = add(hadamard(gf, cr), hadamard(gi, gg));
  Tensor h_next = hadamard(go, tanh(c_next));
  if (vector_input) {
    h_next = reshape(h_next, {hdim});
    c_next = reshape(c_next, {hdim});
  }
  return {h_next, c_next};
}

// ---------------------------------------------------------------------------
// log-softmax

Tensor log_softmax_rows(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("log_softmax_rows: expected [n x V], got " + shape_to_string(a.shape()));
  }
  const std::int64_t n = a.dim(0), v = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = av.data() + i * v;
    double mx = row[0];
    for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double acc = 0.0;
    for (std::int64_t j = 0; j < v; ++j) acc += std::exp(row[j] - mx);
    const double lse = mx + std::log(acc);
    for (std::int64_t j = 0; j < v; ++j) out[i * v + j] = row[j] - lse;
  }
  ensure_finite(out, "log_softmax_rows");
  NodePtr an = a.node_ptr();
  std::vector<double> y = out;
  return Tensor::make_result(
      {n, v}, std::move(out), {an},
      [an, y = std::move(y), n, v](const std::vector<double>& g, GradMap& sink) {
        if (!an->tracks_grad()) return;
        auto& ga = sink.accumulate_buffer(an.get());
        for (std::int64_t i = 0; i < n; ++i) {
          double gsum = 0.0;
          for (std::int64_t j = 0; j < v; ++j) gsum += g[i * v + j];
          for (std::int64_t j = 0; j < v; ++j) {
            ga[i * v + j] += g[i * v + j] - std::exp(y[i * v + j]) * gsum;
          }
        }
      });
}

}  // namespace m2d
