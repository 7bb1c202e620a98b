// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "jasnn/tensor.hpp"

// Differentiable tensor operations. Each op records its backward rule on the
// active tape (if any) and never mutates its operands.
namespace jasnn::ops {

Tensor matmul(const Tensor& a, const Tensor& b);

// Cross-correlation. input [batch, c_in, h, w], kernel [c_out, c_in, k, k].
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
std::size_t conv_output_extent(std::size_t in, std::size_t k, int stride, int padding);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// Same values, no gradient flows back into `a`.
Tensor detach(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// x [rows, n] + bias [n] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
// m [rows, r] with column j multiplied by scale[j].
Tensor scale_columns(const Tensor& m, const Tensor& scale);
// k*k matrices of shape [c_in, c_out], row-major over kernel positions, into
// a kernel [c_out, c_in, k, k].
Tensor assemble_kernel(const std::vector<Tensor>& entries, std::size_t k);

Tensor global_avg_pool(const Tensor& x);
Tensor mean_over_axis(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);

Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);
// Mean over rows of -log_probs[row, labels[row]].
Tensor nll_loss(const Tensor& log_probs, std::span<const int> labels);

// Leading-axis helpers used to run T time steps as one stacked batch.
Tensor concat0(const std::vector<Tensor>& parts);
Tensor slice0(const Tensor& x, std::size_t begin, std::size_t end);
// [batch, ...] -> [times * batch, ...], block t holding a copy of x.
Tensor repeat0(const Tensor& x, std::size_t times);
// [times * batch, ...] -> [batch, ...], the mean of the `times` blocks.
Tensor block_mean0(const Tensor& x, std::size_t times);

struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;

    static BatchNormState fresh(std::size_t channels);
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization of x [batch, c, h, w]. Training mode uses batch
// statistics and updates `state` (unbiased variance); eval mode uses `state`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

} // namespace jasnn::ops
