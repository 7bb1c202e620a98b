// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "jasnn/errors.hpp"
#include "jasnn/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

using namespace jasnn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

} // namespace

TEST_CASE("tensor construction checks shapes", "[tensor]") {
    auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.dim(1) == 3);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
    CHECK_THROWS_AS(t.item(), DimensionError);
}

TEST_CASE("matmul examples", "[ops][matmul]") {
    auto i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(vals(ops::matmul(i2, m)) == std::vector<double>{1, 2, 3, 4});
    CHECK(ops::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);
    try {
        ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        CHECK_THAT(e.what(), ContainsSubstring("[2, 3]") || ContainsSubstring("2x3"));
    }
}

TEST_CASE("matmul gradient of sum on random 3x3", "[ops][matmul][grad]") {
    std::mt19937_64 rng(3);
    auto a = testing::random_param({3, 3}, rng), b = testing::random_param({3, 3}, rng);
    const double err = testing::gradcheck([&] { return ops::sum(ops::matmul(a, b)); }, {a, b});
    CHECK(err <= 1e-6);
}

TEST_CASE("conv2d examples", "[ops][conv]") {
    auto ones = Tensor::full({1, 1, 3, 3}, 1.0);
    auto y = ops::conv2d(ones, Tensor::full({1, 1, 3, 3}, 1.0), 1, 1);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    CHECK(y[4] == 9.0);
    CHECK(y[0] == 4.0);
    CHECK(y[8] == 4.0);

    std::mt19937_64 rng(1);
    auto x = testing::random_tensor({2, 3, 5, 4}, rng);
    std::vector<double> delta(3 * 3 * 9, 0.0);
    for (std::size_t c = 0; c < 3; ++c) delta[(c * 3 + c) * 9 + 4] = 1.0;
    CHECK(vals(ops::conv2d(x, Tensor::from({3, 3, 3, 3}, delta), 1, 1)) == vals(x));

    CHECK(ops::conv_output_extent(8, 3, 2, 1) == 4);
    CHECK_THROWS_AS(ops::conv2d(Tensor::zeros({1, 1, 1, 1}), Tensor::zeros({1, 1, 3, 3}), 1, 0), ConfigError);
    CHECK_THROWS_AS(ops::conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), 1, 1), DimensionError);
}

TEST_CASE("conv2d gradient on 2x3x8x8 with 4x3x3x3 kernel", "[ops][conv][grad]") {
    std::mt19937_64 rng(5);
    auto x = testing::random_param({2, 3, 8, 8}, rng), k = testing::random_param({4, 3, 3, 3}, rng);
    CHECK(testing::gradcheck([&] { return testing::project(ops::conv2d(x, k, 1, 1)); }, {x, k}) <= 1e-5);
}

TEST_CASE("elementwise examples", "[ops]") {
    CHECK(vals(ops::relu(Tensor::from({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
    CHECK_THROWS_AS(ops::add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
    CHECK_THROWS_AS(ops::sub(Tensor::zeros({2, 1}), Tensor::zeros({1, 2})), DimensionError);

    // relu subgradient at exactly 0 is 0.
    auto z = Tensor::parameter({3}, {0.0, 0.0, 1.0});
    Tape tape;
    Tensor l;
    {
        TapeScope s(tape);
        l = ops::sum(ops::relu(z));
    }
    tape.backward(l);
    CHECK(z.grad_or_zeros() == std::vector<double>{0, 0, 1});
}

TEST_CASE("add backward passes the gradient through unchanged", "[ops][grad]") {
    std::mt19937_64 rng(9);
    auto a = testing::random_param({3, 4}, rng), b = testing::random_param({3, 4}, rng);
    CHECK(testing::gradcheck([&] { return testing::project(ops::add(a, b)); }, {a, b}) <= 1e-8);
}

TEST_CASE("detach blocks the gradient exactly", "[ops][detach]") {
    std::mt19937_64 rng(11);
    auto x = testing::random_param({2, 5}, rng);
    auto d = ops::detach(x);
    CHECK(vals(d) == vals(x));
    Tape tape;
    Tensor l;
    {
        TapeScope s(tape);
        // x reaches the loss only through the detached path.
        l = testing::project(ops::mul(ops::detach(x), ops::detach(x)));
    }
    tape.backward(l);
    CHECK(x.grad_or_zeros() == std::vector<double>(10, 0.0));

    // Mixed: the live path still contributes.
    x.zero_grad();
    Tape tape2;
    {
        TapeScope s(tape2);
        l = ops::sum(ops::add(ops::detach(x), ops::mul_scalar(x, 2.0)));
    }
    tape2.backward(l);
    CHECK(x.grad_or_zeros() == std::vector<double>(10, 2.0));
}

TEST_CASE("reductions", "[ops]") {
    CHECK(ops::global_avg_pool(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4})).item() == 2.5);
    auto c = ops::global_avg_pool(Tensor::full({2, 3, 4, 4}, 1.75));
    CHECK(c.shape() == Shape{2, 3});
    for (double v : c.values()) CHECK(v == 1.75);
    CHECK_THROWS_AS(ops::global_avg_pool(Tensor::zeros({2, 3})), DimensionError);
    CHECK(vals(ops::mean_over_axis(Tensor::from({2, 2}, {1, 2, 3, 5}), 0)) == std::vector<double>{2, 3.5});
    CHECK(ops::sum(Tensor::from({3}, {1, 2, 3})).item() == 6.0);

    std::mt19937_64 rng(13);
    auto x = testing::random_param({2, 3, 3, 3}, rng);
    CHECK(testing::gradcheck([&] { return testing::project(ops::global_avg_pool(x)); }, {x}) <= 1e-8);
}

TEST_CASE("softmax", "[ops][softmax]") {
    auto p = ops::softmax(Tensor::from({1, 3}, {0, 0, 0}));
    for (double v : p.values()) CHECK_THAT(v, WithinAbs(1.0 / 3.0, 1e-15));
    auto big = ops::softmax(Tensor::from({1, 2}, {1000, 0}));
    CHECK(big[0] == 1.0);
    CHECK(big[1] >= 0.0);
    CHECK(big[1] < 1e-300);
    auto lbig = ops::log_softmax(Tensor::from({1, 2}, {1000, 0}));
    CHECK(lbig[0] == 0.0);
    CHECK(lbig[1] == -1000.0);

    std::mt19937_64 rng(17);
    auto logits = testing::random_tensor({6, 7}, rng, 100.0);
    auto rows = ops::softmax(logits);
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 7; ++c) s += rows[r * 7 + c];
        CHECK_THAT(s, WithinAbs(1.0, 1e-12));
    }
    auto l = testing::random_param({3, 4}, rng);
    CHECK(testing::gradcheck([&] { return testing::project(ops::softmax(l)); }, {l}) <= 1e-6);
}

TEST_CASE("batch_norm", "[ops][bn]") {
    std::mt19937_64 rng(19);
    auto x = testing::random_tensor({64, 2, 4, 4}, rng);
    auto gamma = Tensor::full({2}, 1.0), beta = Tensor::full({2}, 0.0);
    auto state = ops::BatchNormState::fresh(2);
    auto y = ops::batch_norm(x, gamma, beta, state, true);
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        const std::size_t n = 64 * 16;
        for (std::size_t b = 0; b < 64; ++b)
            for (std::size_t p = 0; p < 16; ++p) mean += y[(b * 2 + c) * 16 + p];
        mean /= n;
        for (std::size_t b = 0; b < 64; ++b)
            for (std::size_t p = 0; p < 16; ++p) var += std::pow(y[(b * 2 + c) * 16 + p] - mean, 2);
        var /= n;
        CHECK(std::abs(mean) <= 1e-6);
        CHECK(std::abs(var - 1.0) <= 1e-4);
    }
    // Running statistics moved by momentum 0.1 from (0, 1).
    CHECK(state.running_mean[0] != 0.0);
    CHECK(std::abs(state.running_mean[0]) < 0.1);

    // Standardized input in eval mode with fresh stats passes through.
    auto fresh = ops::BatchNormState::fresh(2);
    auto same = ops::batch_norm(x, gamma, beta, fresh, false);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(same[i] - x[i]) <= 1e-3);

    CHECK_THROWS_AS(ops::batch_norm(Tensor::zeros({1, 2, 2, 2}), gamma, beta, state, true), StatisticsError);
    CHECK_THROWS_AS(ops::batch_norm(Tensor::zeros({2, 3, 2, 2}), gamma, beta, state, true), DimensionError);
}

TEST_CASE("every differentiable op passes finite differences on at least three shapes", "[ops][grad][property]") {
    std::map<std::string, std::set<std::string>> shapes;
    for (auto& c : testing::differentiable_op_cases()) {
        INFO(c.op << " " << c.shape);
        CHECK(testing::gradcheck(c.loss, c.inputs) <= 1e-4);
        shapes[c.op].insert(c.shape);
    }
    for (const auto& [op, s] : shapes) {
        INFO(op);
        CHECK(s.size() >= 3);
    }
}

TEST_CASE("tape records operands before use and rejects a second backward", "[tape]") {
    std::mt19937_64 rng(23);
    auto a = testing::random_param({2, 2}, rng), b = testing::random_param({2, 2}, rng);
    Tape tape;
    Tensor l;
    {
        TapeScope s(tape);
        auto m = ops::matmul(a, b);
        auto r = ops::relu(m);
        l = ops::sum(ops::add(r, m));
    }
    REQUIRE(tape.size() == 4);
    for (std::size_t i = 0; i < tape.size(); ++i)
        for (auto id : tape.operand_ids(i)) CHECK(id <= i); // 0 = leaf, k = node k-1
    tape.backward(l);
    CHECK(tape.consumed());
    const auto g = a.grad_or_zeros();
    CHECK_THROWS_AS(tape.backward(l), TapeError);
    CHECK(a.grad_or_zeros() == g);
}

TEST_CASE("no tape, no recording", "[tape]") {
    auto a = Tensor::parameter({2}, {1, 2});
    auto y = ops::mul_scalar(a, 3.0);
    CHECK(y.node_id() == 0);
    CHECK(Tape::active() == nullptr);
}

TEST_CASE("ops stay finite for inputs up to 1e3", "[ops][property]") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(12);
        for (auto& x : v) x = u(rng);
        auto t = Tensor::from({3, 4}, v);
        for (const auto& r : {ops::softmax(t), ops::log_softmax(t), ops::relu(t), ops::matmul(t, ops::reshape(t, {4, 3}))})
            for (double x : r.values()) CHECK(std::isfinite(x));
        std::vector<int> labels{0, 1, 2};
        CHECK(std::isfinite(ops::nll_loss(ops::log_softmax(t), labels).item()));
    }
    CHECK_THROWS_AS(ops::nll_loss(ops::log_softmax(Tensor::zeros({1, 2})), std::vector<int>{2}), DataError);
}
