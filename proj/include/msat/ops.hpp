// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Rank-2 tensors are the working currency; vectors
// are carried as 1×n rows. Elementwise binary ops accept equal shapes or a
// single-element operand; row-vector broadcasting is spelled out explicitly
// through add_row / mul_row.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msat/tensor.hpp"

namespace msat {

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x · Wᵀ for x: R×in, W: out×in.
Tensor linear(const Tensor& x, const Tensor& weight);
/// x · Wᵀ + b with b holding `out` entries broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor transpose(const Tensor& a);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// X + v and X ⊙ v with v (C entries) broadcast over the rows of X: R×C.
Tensor add_row(const Tensor& x, const Tensor& v);
Tensor mul_row(const Tensor& x, const Tensor& v);

/// Normalizes over the last axis, then gain ⊙ x̂ + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Reductions and layout. Axis-taking ops work on matrices.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_axis(const Tensor& a, std::size_t axis);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// Stacks a 1×C row n times.
Tensor repeat_rows(const Tensor& row, std::size_t n);
Tensor softmax_axis(const Tensor& a, std::size_t axis);
Tensor log_softmax_rows(const Tensor& a);

// Grouped channel ops for multi-head attention over contiguous channel groups.
/// out[i, g] = Σ_{j in group g} x[i, j] · w[j], x: R×C, w: C entries, C divisible by groups.
Tensor grouped_row_dot(const Tensor& x, const Tensor& w, std::size_t groups);
/// out[j] = Σ_i weights[i, group(j)] · values[i, j], weights: R×G, values: R×C; result 1×C.
/// Rows whose weight is exactly zero are skipped in the forward pass.
Tensor grouped_weighted_sum(const Tensor& weights, const Tensor& values);

// Losses.
/// Mean over entries of max(x,0) − x·y + log(1 + e^{−|x|}).
Tensor sigmoid_bce_mean(const Tensor& logits, std::span<const double> targets);
/// Mean over rows with include[r] of −log softmax(logits[r])[targets[r]].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                             const std::vector<bool>& include);

}  // namespace msat
