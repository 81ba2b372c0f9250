#pragma once

#include <cstdint>
#include <vector>

#include "chainhoi/tensor.hpp"

namespace chainhoi {
namespace ops {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor square(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor sin_op(const Tensor& a);
Tensor cos_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);

// x: [..., d], bias: [d]
Tensor add_bias(const Tensor& x, const Tensor& b);

// matmul: (m,k)x(k,n); (B,m,k)x(k,n); (B,m,k)x(B,k,n)
Tensor matmul(const Tensor& a, const Tensor& b);
// y = x W + b, x: [..., d_in]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// reductions
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// [L, n, d] -> [L, d], mean over axis 1
Tensor mean_axis1(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
// weighted sum of a flat tensor with fixed weights
Tensor weighted_sum(const Tensor& a, const std::vector<double>& w);

// shape ops
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor transpose_last2(const Tensor& a);
Tensor narrow(const Tensor& a, int axis, int start, int len);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor stack0(const std::vector<Tensor>& xs);  // k tensors of shape S -> [k, S...]
// [n, d] -> [h, n, d/h] and back
Tensor split_heads(const Tensor& a, int heads);
Tensor merge_heads(const Tensor& a);
// [L, d] -> [L, n, d]
Tensor repeat_middle(const Tensor& a, int n);

// softmax family over the last axis
Tensor softmax_lastdim(const Tensor& a);
Tensor log_softmax_lastdim(const Tensor& a);
// mask has shape [rows, cols] where cols = last dim of a and rows = second-to-last;
// leading axes of a broadcast over the mask. 1 = allowed. A fully masked row throws MaskError.
Tensor masked_softmax_lastdim(const Tensor& a, const std::vector<uint8_t>& mask, int mask_rows,
                              int mask_cols);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// table: [V, d], ids -> [n, d]
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);
Tensor diag_rows(const Tensor& a);  // [n, n] -> [n]
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);

// 1-D exclusive prefix sum: y_0 = 0, y_i = sum_{s<i} x_s
Tensor cumsum_exclusive(const Tensor& a);

// time-axis ops on [L, n, c] tensors
// w: [k, c_in, c_out], symmetric zero padding keeps L
Tensor conv1d_time(const Tensor& x, const Tensor& w, const Tensor& b, int dilation);
Tensor maxpool_time(const Tensor& x, int k);  // valid-window max, same length

// x: [P, d], seg: cluster id per row in [0, n_seg) -> [n_seg, d] max per cluster.
// Every cluster must be nonempty.
Tensor segment_max(const Tensor& x, const std::vector<int>& seg, int n_seg);

Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace ops
}  // namespace chainhoi
