#pragma once

#include <utility>
#include <vector>

#include "m2d/tensor.hpp"

// Differentiable operations on Tensor. Every op validates shapes up front,
// checks its outputs for non-finite values, and registers a backward pass
// when any input tracks gradients. All ops are deterministic.

namespace m2d {

// ---- elementwise arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);       // same shape
Tensor sub(const Tensor& a, const Tensor& b);       // same shape
Tensor hadamard(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& a, double s);
Tensor affine(const Tensor& a, double mul, double shift);  // a*mul + shift

// ---- elementwise functions ----
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);  // NumericError when any entry <= 0

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m x k] * [k x n]
// Row-wise affine map: x [n x k] (or [k]) with weight [m x k] -> [n x m]
// (or [m]); bias optional (pass an undefined Tensor to skip).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});
Tensor transpose2d(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape target);
Tensor concat1d(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);  // [n x p],[n x q] -> [n x (p+q)]
Tensor slice1d(const Tensor& a, std::int64_t from, std::int64_t to);
Tensor slice_cols(const Tensor& a, std::int64_t from, std::int64_t to);
Tensor gather_rows(const Tensor& a, const std::vector<std::int64_t>& rows);
Tensor gather1d(const Tensor& a, const std::vector<std::int64_t>& idx);
Tensor select_col(const Tensor& a, std::int64_t col);  // [n x m] -> [n]
Tensor stack_scalars(const std::vector<Tensor>& xs);   // n scalars -> [n]
Tensor stack_rows(const std::vector<Tensor>& rows);    // n tensors [m] or [1 x m] -> [n x m]
Tensor repeat_row(const Tensor& v, std::int64_t n);    // [m] -> [n x m]

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- broadcast over rows / constant masks ----
Tensor mul_rows(const Tensor& a, const Tensor& v);  // [n x m] * v[m] per row
// Multiplies row i (rows form) or plane cell i (CHW form) by mask01[i].
// The mask is a constant: no gradient is associated with it.
Tensor mask_rows(const Tensor& a, const std::vector<double>& mask01);
Tensor mask_chw(const Tensor& a, const std::vector<double>& mask01);  // mask over H*W

// ---- normalization / pooling ----
// L2-normalizes along `axis`; exact-zero slices pass through unchanged.
Tensor l2_normalize(const Tensor& a, int axis);
// Per-channel max over rows x..y inclusive of a [N x d] tensor. Gradient is
// routed to the first maximal row per channel.
Tensor segment_max(const Tensor& a, std::int64_t x, std::int64_t y);
// Pools rows into groups given as inclusive [lo, hi] ranges; a group with
// lo > hi emits a zero row (padding).
Tensor group_max_rows(const Tensor& a,
                      const std::vector<std::pair<std::int64_t, std::int64_t>>& groups);
// For grid [N x d] builds the [N x N x d] map whose (x, y) cell holds the
// per-channel max over rows x..y (cells with x > y are zero).
Tensor upper_tri_max_map(const Tensor& a);

// ---- convolution ----
// input [C x H x W], kernels [C' x C x k x k] with odd k, bias [C'].
// Cross-correlation with zero padding (k-1)/2; spatial size preserved.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

// ---- sequence ----
struct LstmParams {
  Tensor w_ih;  // [4H x d_in], gate order input, forget, candidate, output
  Tensor w_hh;  // [4H x H]
  Tensor b;     // [4H]
};

struct LstmState {
  Tensor h;
  Tensor c;
};

// Standard LSTM cell. x may be [d_in] with h,c [H], or a batch [n x d_in]
// with h,c [n x H]; the same parameters apply to every row.
LstmState lstm_cell(const Tensor& x, const LstmState& state, const LstmParams& params);

Tensor log_softmax_rows(const Tensor& a);  // [n x V] -> [n x V], numerically stable

}  // namespace m2d
