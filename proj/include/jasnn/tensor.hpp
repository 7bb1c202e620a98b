// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jasnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until a gradient reaches this tensor
    bool requires_grad = false;
    std::uint64_t node_id = 0; // 0 for leaves, otherwise 1 + recording index

    void accumulate_grad(std::span<const double> g);
    std::vector<double>& grad_storage();
};

} // namespace detail

// Dense row-major double tensor with a gradient slot. Copies are shallow: two
// Tensor handles may refer to the same storage, which is how the tape keeps
// operands alive until the backward pass.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    // Leaf that accumulates gradients during backward.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t dim(std::size_t axis) const;

    std::span<const double> values() const;
    // Leaf mutation (optimizer updates, test perturbations). Never called on
    // recorded intermediates.
    std::span<double> mutable_values();
    double item() const;
    double operator[](std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::vector<double> grad_or_zeros() const;
    void zero_grad();
    void accumulate_grad(std::span<const double> g) const;

    std::uint64_t node_id() const;
    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

    // Value copy with no gradient history.
    Tensor clone() const;

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    detail::TensorImpl& impl() const;

    std::shared_ptr<detail::TensorImpl> impl_;

    friend class Tape;
    friend Tensor make_result(std::string_view, Shape, std::vector<double>,
                              std::initializer_list<Tensor>,
                              std::function<void(std::span<const double>)>);
    friend Tensor make_result(std::string_view, Shape, std::vector<double>,
                              const std::vector<Tensor>&,
                              std::function<void(std::span<const double>)>);
};

// Records operations in execution order; backward replays them in reverse.
// A tape may be replayed once: a second backward() throws TapeError.
class Tape {
public:
    using BackwardFn = std::function<void(std::span<const double>)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(const Tensor& output, const std::vector<Tensor>& inputs, BackwardFn fn);
    void backward(const Tensor& loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    bool consumed() const noexcept { return consumed_; }
    // Operand node ids of node `index` (recording order); exposed for tests.
    std::vector<std::uint64_t> operand_ids(std::size_t index) const;

    static Tape* active() noexcept;

private:
    struct Node {
        std::shared_ptr<detail::TensorImpl> output;
        std::vector<std::uint64_t> operand_ids;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;

    friend class TapeScope;
};

// Makes `tape` the active tape for the current thread for the scope lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

// Builds an op result. When a tape is active and any input requires a
// gradient, the backward rule is recorded; otherwise it is dropped. Throws
// NumericError when the produced values are not all finite.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward);
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(std::span<const double>)> backward);

} // namespace jasnn
