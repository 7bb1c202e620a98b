// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "jasnn/tensor.hpp"

namespace jasnn {

enum class Side { Ann, Snn };

const char* side_name(Side side);

// W_side = U * diag(sigma_side) * V. U and V are shared by both networks and
// receive gradient from both; each sigma only from its own side.
struct FactorizedWeight {
    Tensor u_factor;  // [c_in x r]
    Tensor v_factor;  // [r x c_out]
    Tensor sigma_ann; // [r]
    Tensor sigma_snn; // [r]
    std::optional<std::pair<std::size_t, std::size_t>> kernel_index;

    std::size_t c_in() const { return u_factor.dim(0); }
    std::size_t c_out() const { return v_factor.dim(1); }
    std::size_t rank() const { return sigma_ann.numel(); }
    const Tensor& sigma(Side side) const { return side == Side::Ann ? sigma_ann : sigma_snn; }
};

// SVD of the freshly initialized dense weight w0 [c_in x c_out]; both sigma
// vectors start from the same singular values.
FactorizedWeight init_factorized(const Tensor& w0);

Tensor compose(const FactorizedWeight& fw, Side side);

// k*k factorized kernel entries (row-major over kernel positions) composed
// into a conv kernel [c_out, c_in, k, k].
Tensor compose_conv(const std::vector<FactorizedWeight>& grid, std::size_t k, Side side);

struct ParamCount {
    std::size_t factorized = 0; // c_in^2 + c_out^2 + 2r
    std::size_t baseline = 0;   // 2 * c_in * c_out (separate ANN and SNN weights)

    long long overhead() const {
        return static_cast<long long>(factorized) - static_cast<long long>(baseline);
    }
    double ratio() const { return static_cast<double>(factorized) / static_cast<double>(baseline); }
};

ParamCount param_count(std::size_t c_in, std::size_t c_out);

} // namespace jasnn
