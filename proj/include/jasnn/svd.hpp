// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "jasnn/tensor.hpp"

namespace jasnn {

struct SvdResult {
    Tensor u;                  // [m x r], orthonormal columns
    std::vector<double> sigma; // r values, non-increasing, non-negative
    Tensor v;                  // [r x n], orthonormal rows
    int sweeps = 0;
};

inline constexpr double kJacobiTolerance = 1e-14;
inline constexpr int kJacobiMaxSweeps = 60;

// Thin SVD w = u * diag(sigma) * v of an [m x n] matrix, r = min(m, n), by
// one-sided (Hestenes) Jacobi rotations. Converged when the off-diagonal mass
// sqrt(sum_{p<q} (a_p . a_q)^2) / sum_p |a_p|^2 drops to kJacobiTolerance.
// Throws NumericError if that takes more than kJacobiMaxSweeps sweeps.
SvdResult jacobi_svd(const Tensor& w);

} // namespace jasnn
