// SPDX-License-Identifier: Apache-2.0
#include "gemm.hpp"

#include <Eigen/Core>

namespace jasnn::detail {

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;
} // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
    const auto M = static_cast<Eigen::Index>(m);
    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(k);
    Map out(c, M, N);
    if (!accumulate) out.setZero();
    if (m == 0 || n == 0 || k == 0) return;
    const ConstMap a_map(a, trans_a ? K : M, trans_a ? M : K);
    const ConstMap b_map(b, trans_b ? N : K, trans_b ? K : N);
    if (!trans_a && !trans_b)
        out.noalias() += a_map * b_map;
    else if (trans_a && !trans_b)
        out.noalias() += a_map.transpose() * b_map;
    else if (!trans_a && trans_b)
        out.noalias() += a_map * b_map.transpose();
    else
        out.noalias() += a_map.transpose() * b_map.transpose();
}

} // namespace jasnn::detail
