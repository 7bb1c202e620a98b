// SPDX-License-Identifier: Apache-2.0
#include "jasnn/losses.hpp"

#include <cmath>
#include <string>

#include "jasnn/errors.hpp"
#include "jasnn/ops.hpp"

namespace jasnn {

void BranchOutputs::validate() const {
    if (ann_logits.size() != snn_logits.size())
        throw DimensionError("branch outputs: " + std::to_string(ann_logits.size()) + " ANN exits vs " +
                             std::to_string(snn_logits.size()) + " SNN exits");
    for (std::size_t i = 0; i < ann_logits.size(); ++i)
        if (ann_logits[i].shape() != snn_logits[i].shape())
            throw DimensionError("branch " + std::to_string(i + 1) + ": ANN logits " +
                                 shape_str(ann_logits[i].shape()) + " vs SNN logits " +
                                 shape_str(snn_logits[i].shape()));
}

void LossWeights::validate() const {
    if (!std::isfinite(lambda1) || !std::isfinite(lambda2) || lambda1 < 0.0 || lambda2 < 0.0)
        throw ConfigError("loss weights must be finite and non-negative");
}

namespace {

Tensor accumulate(const std::vector<Tensor>& terms) {
    if (terms.empty()) return Tensor::scalar(0.0);
    Tensor total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
    return total;
}

} // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    return ops::nll_loss(ops::log_softmax(logits), labels);
}

Tensor ce_loss(const std::vector<Tensor>& logits, std::span<const int> labels) {
    std::vector<Tensor> terms;
    for (const auto& l : logits) terms.push_back(cross_entropy(l, labels));
    return accumulate(terms);
}

Tensor ce_loss(const BranchOutputs& branches, std::span<const int> labels) {
    branches.validate();
    return ops::add(ce_loss(branches.ann_logits, labels), ce_loss(branches.snn_logits, labels));
}

Tensor kld_loss(const BranchOutputs& branches) {
    branches.validate();
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < branches.exits(); ++i) {
        const Tensor teacher = ops::detach(branches.ann_logits[i]);
        const Tensor p = ops::softmax(teacher);
        const Tensor log_p = ops::log_softmax(teacher);
        const Tensor log_q = ops::log_softmax(branches.snn_logits[i]);
        const double batch = static_cast<double>(teacher.dim(0));
        terms.push_back(ops::mul_scalar(ops::sum(ops::mul(p, ops::sub(log_p, log_q))), 1.0 / batch));
    }
    return accumulate(terms);
}

Tensor norm_loss(const std::vector<Tensor>& ann_feats, const std::vector<Tensor>& snn_feats) {
    if (ann_feats.size() != snn_feats.size())
        throw DimensionError("norm_loss: " + std::to_string(ann_feats.size()) + " ANN features vs " +
                             std::to_string(snn_feats.size()) + " SNN features");
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < ann_feats.size(); ++i) {
        if (ann_feats[i].shape() != snn_feats[i].shape())
            throw DimensionError("norm_loss: branch " + std::to_string(i + 1) + " shapes " +
                                 shape_str(ann_feats[i].shape()) + " vs " +
                                 shape_str(snn_feats[i].shape()));
        const Tensor diff = ops::sub(ops::detach(ann_feats[i]), snn_feats[i]);
        const double batch = static_cast<double>(diff.dim(0));
        terms.push_back(ops::mul_scalar(ops::sum(ops::mul(diff, diff)), 1.0 / batch));
    }
    return accumulate(terms);
}

Tensor total_loss(const Tensor& ce, const Tensor& kld, const Tensor& norm, const LossWeights& w) {
    w.validate();
    return ops::add(ops::add(ce, ops::mul_scalar(kld, w.lambda1)), ops::mul_scalar(norm, w.lambda2));
}

} // namespace jasnn
