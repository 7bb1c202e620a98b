// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "jasnn/tensor.hpp"

namespace jasnn {

enum class SurrogateKind { Rectangular, Triangular };

// Rectangular: (1/a) * 1{|u_pre - v_th| < a/2}, width = a.
// Triangular:  gamma * max(0, 1 - |u_pre / v_th - 1|), width = gamma.
struct Surrogate {
    SurrogateKind kind = SurrogateKind::Triangular;
    double width = 1.0;
};

struct LifConfig {
    double tau = 0.5;  // membrane leak, in (0, 1)
    double v_th = 1.0; // firing threshold
    Surrogate surrogate{};
    bool reset_detach = true; // treat the (1 - spike) reset factor as constant in backward

    void validate() const;
};

struct LifState {
    Tensor u;
    std::size_t t = 0;

    static LifState zeros(const Shape& shape);
};

struct LifStepResult {
    Tensor spikes;
    LifState state;
};

// One forward step: u_pre = tau*u + c, spike = u_pre > v_th, u' = u_pre*(1 - spike).
// Not recorded on the tape; use lif_sequence for training.
LifStepResult lif_step(const LifState& state, const Tensor& current, const LifConfig& cfg);

double surrogate_grad(double u_pre, const LifConfig& cfg);
Tensor surrogate_grad(const Tensor& u_pre, const LifConfig& cfg);

// Optional record of the membrane after reset, one tensor per step.
struct LifTrace {
    std::vector<Tensor> u_pre;
    std::vector<Tensor> u_post;
};

// Runs T steps from a zero membrane with BPTT backward through the leak.
std::vector<Tensor> lif_sequence(const std::vector<Tensor>& currents, const LifConfig& cfg,
                                 LifTrace* trace = nullptr);

// Same dynamics over a time-stacked tensor [T*batch, ...] whose t-th leading
// block holds the step-t currents. Returns spikes in the same layout.
Tensor lif_sequence_stacked(const Tensor& currents, std::size_t time_steps, const LifConfig& cfg,
                            LifTrace* trace = nullptr);

// Integrate-only output neuron: (1/T) * sum_t c_t.
Tensor integrate_head(const std::vector<Tensor>& currents);

} // namespace jasnn
