// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace jasnn::detail {

// C[m x n] (+)= op(A)[m x k] * op(B)[k x n] over contiguous row-major buffers.
// op(X) is X or its transpose; A is stored as [m x k] (or [k x m] when
// trans_a), B as [k x n] (or [n x k] when trans_b).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);

} // namespace jasnn::detail
