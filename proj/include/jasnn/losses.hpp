// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "jasnn/tensor.hpp"

namespace jasnn {

// Per-exit logits of both networks, exit i sitting after stage i+1.
struct BranchOutputs {
    std::vector<Tensor> ann_logits;
    std::vector<Tensor> snn_logits;

    std::size_t exits() const { return ann_logits.size(); }
    void validate() const;
};

struct LossWeights {
    double lambda1 = 1.0; // KLD
    double lambda2 = 0.3; // feature L2

    void validate() const;
};

// Mean-over-batch cross-entropy of one exit.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Sum over every ANN exit and every SNN exit of the batch-mean cross-entropy.
Tensor ce_loss(const BranchOutputs& branches, std::span<const int> labels);
// Sum over the exits of one side only.
Tensor ce_loss(const std::vector<Tensor>& logits, std::span<const int> labels);

// sum_i mean_b KL(detach(softmax(ann_i)) || softmax(snn_i)).
Tensor kld_loss(const BranchOutputs& branches);

// sum_i mean_b || detach(ann_i) - snn_i ||^2.
Tensor norm_loss(const std::vector<Tensor>& ann_feats, const std::vector<Tensor>& snn_feats);

// ce + lambda1 * kld + lambda2 * norm.
Tensor total_loss(const Tensor& ce, const Tensor& kld, const Tensor& norm, const LossWeights& w);

} // namespace jasnn
