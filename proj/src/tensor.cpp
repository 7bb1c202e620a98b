// SPDX-License-Identifier: Apache-2.0
#include "jasnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "jasnn/errors.hpp"

namespace jasnn {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

void TensorImpl::accumulate_grad(std::span<const double> g) {
    auto& dst = grad_storage();
    if (g.size() != dst.size())
        throw DimensionError("gradient of size " + std::to_string(g.size()) +
                             " does not match tensor " + shape_str(shape));
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

std::vector<double>& TensorImpl::grad_storage() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
}

} // namespace detail

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_shape(const Shape& shape, std::size_t n) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (auto e : shape)
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    if (shape_numel(shape) != n)
        throw DimensionError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(n) + " values");
}

} // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    check_shape(shape, values.size());
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.impl_->requires_grad = true;
    return t;
}

detail::TensorImpl& Tensor::impl() const {
    if (!impl_) throw DimensionError("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::numel() const { return impl().values.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::span<const double> Tensor::values() const { return impl().values; }
std::span<double> Tensor::mutable_values() { return impl().values; }

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl().values[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl().requires_grad = flag; }
bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const double> Tensor::grad() const { return impl().grad; }

std::vector<double> Tensor::grad_or_zeros() const {
    if (has_grad()) return impl().grad;
    return std::vector<double>(numel(), 0.0);
}

void Tensor::zero_grad() { impl().grad.clear(); }
void Tensor::accumulate_grad(std::span<const double> g) const { impl().accumulate_grad(g); }
std::uint64_t Tensor::node_id() const { return impl().node_id; }

Tensor Tensor::clone() const { return from(shape(), impl().values); }

void Tape::record(const Tensor& output, const std::vector<Tensor>& inputs, BackwardFn fn) {
    if (consumed_) throw TapeError("cannot record onto a tape that has already been replayed");
    Node node;
    node.output = output.impl_;
    const std::uint64_t id = nodes_.size() + 1;
    for (const auto& in : inputs) {
        const auto operand = in.impl().node_id;
        if (operand >= id) throw TapeError("operand recorded after its consumer");
        node.operand_ids.push_back(operand);
    }
    node.output->node_id = id;
    node.fn = std::move(fn);
    nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw TapeError("tape already replayed; record a new tape for another backward pass");
    if (loss.numel() != 1)
        throw DimensionError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    consumed_ = true;
    const double seed = 1.0;
    loss.accumulate_grad(std::span<const double>(&seed, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->fn(it->output->grad);
        // Release saved activations as soon as they are no longer needed.
        it->fn = nullptr;
    }
}

std::vector<std::uint64_t> Tape::operand_ids(std::size_t index) const {
    return nodes_.at(index).operand_ids;
}

Tape* Tape::active() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

namespace {

template <typename Inputs>
Tensor make_result_impl(std::string_view op, Shape shape, std::vector<double> values,
                        const Inputs& inputs, std::function<void(std::span<const double>)> backward) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw NumericError(std::string(op) + " produced a non-finite value at flat index " +
                               std::to_string(i) + " of " + shape_str(shape));
    }
    Tensor out = Tensor::from(std::move(shape), std::move(values));
    Tape* tape = Tape::active();
    if (!tape) return out;
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    if (!needs_grad) return out;
    out.set_requires_grad(true);
    tape->record(out, std::vector<Tensor>(inputs.begin(), inputs.end()), std::move(backward));
    return out;
}

} // namespace

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward) {
    return make_result_impl(op, std::move(shape), std::move(values), inputs, std::move(backward));
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(std::span<const double>)> backward) {
    return make_result_impl(op, std::move(shape), std::move(values), inputs, std::move(backward));
}

} // namespace jasnn
