// SPDX-License-Identifier: Apache-2.0
#include "jasnn/factorized.hpp"

#include <algorithm>
#include <string>

#include "jasnn/errors.hpp"
#include "jasnn/ops.hpp"
#include "jasnn/svd.hpp"

namespace jasnn {

const char* side_name(Side side) { return side == Side::Ann ? "ann" : "snn"; }

FactorizedWeight init_factorized(const Tensor& w0) {
    auto svd = jacobi_svd(w0);
    const std::size_t r = svd.sigma.size();
    FactorizedWeight fw;
    fw.u_factor = Tensor::parameter(svd.u.shape(), {svd.u.values().begin(), svd.u.values().end()});
    fw.v_factor = Tensor::parameter(svd.v.shape(), {svd.v.values().begin(), svd.v.values().end()});
    fw.sigma_ann = Tensor::parameter({r}, svd.sigma);
    fw.sigma_snn = Tensor::parameter({r}, svd.sigma);
    return fw;
}

Tensor compose(const FactorizedWeight& fw, Side side) {
    return ops::matmul(ops::scale_columns(fw.u_factor, fw.sigma(side)), fw.v_factor);
}

Tensor compose_conv(const std::vector<FactorizedWeight>& grid, std::size_t k, Side side) {
    if (grid.size() != k * k)
        throw ConfigError("compose_conv: " + std::to_string(grid.size()) + " entries for a " +
                          std::to_string(k) + "x" + std::to_string(k) + " kernel");
    std::vector<Tensor> entries;
    entries.reserve(grid.size());
    for (const auto& fw : grid) {
        if (fw.c_in() != grid.front().c_in() || fw.c_out() != grid.front().c_out())
            throw ConfigError("compose_conv: kernel entries disagree on (c_in, c_out)");
        entries.push_back(compose(fw, side));
    }
    return ops::assemble_kernel(entries, k);
}

ParamCount param_count(std::size_t c_in, std::size_t c_out) {
    const std::size_t r = std::min(c_in, c_out);
    return {c_in * c_in + c_out * c_out + 2 * r, 2 * c_in * c_out};
}

} // namespace jasnn
