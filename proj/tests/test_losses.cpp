// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "jasnn/errors.hpp"
#include "jasnn/losses.hpp"
#include "jasnn/ops.hpp"
#include "support/gradcheck.hpp"

using namespace jasnn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

BranchOutputs random_branches(std::mt19937_64& rng, std::size_t exits, std::size_t batch, std::size_t classes) {
    BranchOutputs b;
    for (std::size_t i = 0; i < exits; ++i) {
        b.ann_logits.push_back(testing::random_param({batch, classes}, rng, 2.0));
        b.snn_logits.push_back(testing::random_param({batch, classes}, rng, 2.0));
    }
    return b;
}

// Hand cross-entropy: -log(exp(z_y) / sum exp(z)).
double hand_ce(const Tensor& z, const std::vector<int>& labels) {
    const std::size_t rows = z.dim(0), cols = z.dim(1);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(z[r * cols + c]);
        total += std::log(s) - z[r * cols + static_cast<std::size_t>(labels[r])];
    }
    return total / static_cast<double>(rows);
}

} // namespace

TEST_CASE("ce_loss examples", "[losses][ce]") {
    const std::vector<int> labels{0, 3, 1};
    BranchOutputs peaked;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> v(3 * 5, 0.0);
        for (std::size_t r = 0; r < 3; ++r) v[r * 5 + static_cast<std::size_t>(labels[r])] = 30.0;
        peaked.ann_logits.push_back(Tensor::from({3, 5}, v));
        peaked.snn_logits.push_back(Tensor::from({3, 5}, v));
    }
    CHECK(ce_loss(peaked, labels).item() <= 1e-10);

    BranchOutputs uniform;
    for (int i = 0; i < 4; ++i) {
        uniform.ann_logits.push_back(Tensor::zeros({3, 5}));
        uniform.snn_logits.push_back(Tensor::zeros({3, 5}));
    }
    CHECK_THAT(ce_loss(uniform, labels).item(), WithinRel(8.0 * std::log(5.0), 1e-14));

    std::mt19937_64 rng(201);
    auto toy = random_branches(rng, 2, 3, 5);
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) expected += hand_ce(toy.ann_logits[i], labels) + hand_ce(toy.snn_logits[i], labels);
    CHECK_THAT(ce_loss(toy, labels).item(), WithinAbs(expected, 1e-10));
    CHECK_THAT(ce_loss(toy.snn_logits, labels).item(),
               WithinAbs(hand_ce(toy.snn_logits[0], labels) + hand_ce(toy.snn_logits[1], labels), 1e-10));

    CHECK_THROWS_AS(ce_loss(toy, std::vector<int>{0, 5, 1}), DataError);
    CHECK_THROWS_AS(ce_loss(toy, std::vector<int>{0, -1, 1}), DataError);
}

TEST_CASE("kld_loss examples", "[losses][kld]") {
    BranchOutputs b;
    b.ann_logits = {Tensor::from({1, 2}, {std::log(0.75), std::log(0.25)})};
    b.snn_logits = {Tensor::from({1, 2}, {0.0, 0.0})};
    const double expected = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
    CHECK_THAT(kld_loss(b).item(), WithinAbs(expected, 1e-14));
    CHECK_THAT(kld_loss(b).item(), WithinAbs(0.13081, 1e-5));

    std::mt19937_64 rng(203);
    auto same = random_branches(rng, 4, 3, 6);
    same.snn_logits = same.ann_logits;
    CHECK(std::abs(kld_loss(same).item()) <= 1e-12);

    // A zero-probability teacher class contributes nothing (0 ln 0 = 0).
    BranchOutputs hard;
    hard.ann_logits = {Tensor::from({1, 3}, {0.0, -1e3, 0.0})};
    hard.snn_logits = {Tensor::from({1, 3}, {0.0, 0.0, 0.0})};
    CHECK_THAT(kld_loss(hard).item(), WithinAbs(std::log(1.5), 1e-12));

    BranchOutputs bad;
    bad.ann_logits = {Tensor::zeros({2, 3})};
    bad.snn_logits = {Tensor::zeros({2, 4})};
    CHECK_THROWS_AS(kld_loss(bad), DimensionError);
}

TEST_CASE("kld is non-negative and zero only for equal distributions", "[losses][kld][property]") {
    std::mt19937_64 rng(205);
    for (int trial = 0; trial < 100; ++trial) {
        auto b = random_branches(rng, 1 + trial % 4, 1 + trial % 5, 2 + trial % 7);
        CHECK(kld_loss(b).item() > 0.0);
        // Shifting every logit of a row leaves the softmax unchanged.
        for (std::size_t i = 0; i < b.exits(); ++i) b.snn_logits[i] = ops::add(b.ann_logits[i], Tensor::full(b.ann_logits[i].shape(), 3.0));
        CHECK(std::abs(kld_loss(b).item()) <= 1e-12);
    }
}

TEST_CASE("norm_loss examples", "[losses][norm]") {
    CHECK(norm_loss({Tensor::from({1, 2}, {1, 2})}, {Tensor::from({1, 2}, {0, 0})}).item() == 5.0);
    std::mt19937_64 rng(207);
    auto f = testing::random_tensor({4, 3}, rng);
    CHECK(norm_loss({f, f}, {f, f}).item() == 0.0);
    // Mean over the batch, sum over branches.
    CHECK_THAT(norm_loss({Tensor::from({2, 1}, {1, 3}), Tensor::from({1, 1}, {2})},
                         {Tensor::from({2, 1}, {0, 0}), Tensor::from({1, 1}, {0})})
                   .item(),
               WithinAbs(5.0 + 4.0, 1e-15));
    CHECK_THROWS_AS(norm_loss({Tensor::zeros({1, 2})}, {Tensor::zeros({1, 3})}), DimensionError);
    CHECK_THROWS_AS(norm_loss({Tensor::zeros({1, 2})}, {}), DimensionError);
}

TEST_CASE("distillation terms never send gradient into the ANN side", "[losses][detach][property]") {
    std::mt19937_64 rng(209);
    for (int trial = 0; trial < 10; ++trial) {
        auto b = random_branches(rng, 4, 3, 5);
        for (int term = 0; term < 2; ++term) {
            for (auto& t : b.ann_logits) t.zero_grad();
            for (auto& t : b.snn_logits) t.zero_grad();
            Tape tape;
            Tensor l;
            {
                TapeScope s(tape);
                l = term == 0 ? kld_loss(b) : norm_loss(b.ann_logits, b.snn_logits);
            }
            tape.backward(l);
            for (const auto& t : b.ann_logits) CHECK(t.grad_or_zeros() == std::vector<double>(t.numel(), 0.0));
            bool any = false;
            for (const auto& t : b.snn_logits)
                for (double g : t.grad_or_zeros()) any = any || g != 0.0;
            CHECK(any);
        }
    }
}

TEST_CASE("loss gradients match finite differences", "[losses][grad]") {
    std::mt19937_64 rng(211);
    auto b = random_branches(rng, 2, 3, 4);
    const std::vector<int> labels{1, 0, 3};
    CHECK(testing::gradcheck([&] { return ce_loss(b, labels); },
                             {b.ann_logits[0], b.ann_logits[1], b.snn_logits[0], b.snn_logits[1]}) <= 1e-6);
    CHECK(testing::gradcheck([&] { return kld_loss(b); }, {b.snn_logits[0], b.snn_logits[1]}) <= 1e-6);
    CHECK(testing::gradcheck([&] { return norm_loss(b.ann_logits, b.snn_logits); },
                             {b.snn_logits[0], b.snn_logits[1]}) <= 1e-6);
}

TEST_CASE("total_loss", "[losses][total]") {
    auto t = total_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0), LossWeights{1.0, 0.3});
    CHECK_THAT(t.item(), WithinAbs(3.9, 1e-15));
    CHECK(total_loss(Tensor::scalar(1.25), Tensor::scalar(2.0), Tensor::scalar(3.0), LossWeights{0.0, 0.0}).item() == 1.25);
    // Linear in each component.
    const LossWeights w{0.7, 0.2};
    const double base = total_loss(Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0), w).item();
    const double twice = total_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(1.0), w).item();
    CHECK_THAT(twice - base, WithinAbs(0.7, 1e-15));
    CHECK_THROWS_AS((LossWeights{-1.0, 0.3}).validate(), ConfigError);
    CHECK_THROWS_AS((LossWeights{1.0, std::nan("")}).validate(), ConfigError);
    LossWeights d;
    CHECK(d.lambda1 == 1.0);
    CHECK(d.lambda2 == 0.3);
}
