// SPDX-License-Identifier: Apache-2.0
#include "jasnn/lif.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "jasnn/errors.hpp"
#include "jasnn/ops.hpp"

namespace jasnn {

void LifConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("lif tau must lie in (0, 1), got " + std::to_string(tau));
    if (!(v_th > 0.0)) throw ConfigError("lif v_th must be positive, got " + std::to_string(v_th));
    if (!(surrogate.width > 0.0))
        throw ConfigError("surrogate width must be positive, got " + std::to_string(surrogate.width));
}

LifState LifState::zeros(const Shape& shape) { return {Tensor::zeros(shape), 0}; }

LifStepResult lif_step(const LifState& state, const Tensor& current, const LifConfig& cfg) {
    cfg.validate();
    if (state.u.shape() != current.shape())
        throw DimensionError("lif_step: current " + shape_str(current.shape()) +
                             " does not match membrane " + shape_str(state.u.shape()));
    const auto u = state.u.values();
    const auto c = current.values();
    std::vector<double> spikes(u.size()), next(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double pre = cfg.tau * u[i] + c[i];
        const bool fire = pre > cfg.v_th;
        spikes[i] = fire ? 1.0 : 0.0;
        next[i] = fire ? 0.0 : pre;
    }
    return {Tensor::from(current.shape(), std::move(spikes)),
            {Tensor::from(current.shape(), std::move(next)), state.t + 1}};
}

double surrogate_grad(double u_pre, const LifConfig& cfg) {
    const double w = cfg.surrogate.width;
    if (cfg.surrogate.kind == SurrogateKind::Triangular)
        return w * std::max(0.0, 1.0 - std::abs(u_pre / cfg.v_th - 1.0));
    return std::abs(u_pre - cfg.v_th) < 0.5 * w ? 1.0 / w : 0.0;
}

Tensor surrogate_grad(const Tensor& u_pre, const LifConfig& cfg) {
    std::vector<double> out(u_pre.numel());
    const auto v = u_pre.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = surrogate_grad(v[i], cfg);
    return Tensor::from(u_pre.shape(), std::move(out));
}

Tensor lif_sequence_stacked(const Tensor& currents, std::size_t time_steps, const LifConfig& cfg,
                            LifTrace* trace) {
    cfg.validate();
    if (time_steps == 0) throw ConfigError("lif_sequence needs at least one time step");
    if (currents.dim(0) % time_steps != 0)
        throw DimensionError("lif_sequence: leading extent " + std::to_string(currents.dim(0)) +
                             " not divisible by T=" + std::to_string(time_steps));
    const std::size_t n = currents.numel() / time_steps;
    const auto c = currents.values();
    auto u_pre = std::make_shared<std::vector<double>>(currents.numel());
    std::vector<double> spikes(currents.numel());
    std::vector<double> u(n, 0.0);
    Shape step_shape = currents.shape();
    step_shape[0] /= time_steps;
    for (std::size_t t = 0; t < time_steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = t * n + i;
            const double pre = cfg.tau * u[i] + c[k];
            (*u_pre)[k] = pre;
            const bool fire = pre > cfg.v_th;
            spikes[k] = fire ? 1.0 : 0.0;
            u[i] = pre * (1.0 - spikes[k]);
        }
        if (trace) {
            trace->u_pre.push_back(Tensor::from(step_shape, std::vector<double>(
                u_pre->begin() + static_cast<long>(t * n), u_pre->begin() + static_cast<long>((t + 1) * n))));
            trace->u_post.push_back(Tensor::from(step_shape, u));
        }
    }
    auto fired = std::make_shared<std::vector<double>>(spikes);
    return make_result(
        "lif_sequence", currents.shape(), std::move(spikes), {currents},
        [currents, u_pre, fired, n, time_steps, cfg](std::span<const double> g) {
            std::vector<double> gc(n * time_steps);
            // gradient reaching u_pre of step t+1, carried back through u_t = u_pre_t (1 - y_t)
            std::vector<double> g_next(n, 0.0);
            for (std::size_t t = time_steps; t-- > 0;) {
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t k = t * n + i;
                    const double sg = surrogate_grad((*u_pre)[k], cfg);
                    const double g_post = cfg.tau * g_next[i];
                    double g_pre = g[k] * sg + g_post * (1.0 - (*fired)[k]);
                    if (!cfg.reset_detach) g_pre -= g_post * (*u_pre)[k] * sg;
                    gc[k] = g_pre;
                    g_next[i] = g_pre;
                }
            }
            currents.accumulate_grad(gc);
        });
}

std::vector<Tensor> lif_sequence(const std::vector<Tensor>& currents, const LifConfig& cfg,
                                 LifTrace* trace) {
    if (currents.empty()) throw ConfigError("lif_sequence needs at least one time step");
    for (const auto& c : currents)
        if (c.shape() != currents.front().shape())
            throw DimensionError("lif_sequence: step currents differ in shape");
    const std::size_t steps = currents.size();
    const Tensor stacked = ops::concat0(currents);
    const Tensor spikes = lif_sequence_stacked(stacked, steps, cfg, trace);
    std::vector<Tensor> out;
    const std::size_t lead = currents.front().dim(0);
    for (std::size_t t = 0; t < steps; ++t) out.push_back(ops::slice0(spikes, t * lead, (t + 1) * lead));
    return out;
}

Tensor integrate_head(const std::vector<Tensor>& currents) {
    if (currents.empty()) throw ConfigError("integrate_head needs at least one time step");
    for (const auto& c : currents)
        if (c.shape() != currents.front().shape())
            throw DimensionError("integrate_head: step currents differ in shape");
    return ops::block_mean0(ops::concat0(currents), currents.size());
}

} // namespace jasnn
