#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "shedd/errors.hpp"

namespace shedd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Operation that produced a tensor; Leaf for user-created tensors.
enum class OpKind {
    Leaf,
    MatMul,
    Transpose,
    Conv2d,
    Relu,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    Log,
    Exp,
    Sqrt,
    Sum,
    Mean,
    Max,
    Softmax,
    AddRowBias,
    AddChannelBias,
    AvgPool2d,
    GlobalAvgPool,
    SliceColumns,
    ConcatColumns,
    Pick,
    RowCosine,
};

const char* op_name(OpKind kind);

template <class T>
struct TensorImpl;

/// Backward rule attached to a non-leaf tensor. `backward` receives the
/// output (values and incoming gradient) and accumulates into the parents.
template <class T>
struct GraphNode {
    OpKind kind = OpKind::Leaf;
    std::vector<std::shared_ptr<TensorImpl<T>>> parents;
    std::function<void(const TensorImpl<T>&)> backward;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::unique_ptr<GraphNode<T>> node;

    /// Gradient buffer, allocated on first use. Empty span when this
    /// tensor does not track gradients.
    std::span<T> grad_sink() {
        if (!requires_grad) return {};
        if (grad.empty()) grad.assign(data.size(), T{0});
        return grad;
    }
};

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled() noexcept;

/// Disables graph construction for its lifetime (thread-local).
class NoGradGuard {
public:
    NoGradGuard() noexcept;
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major tensor with reverse-mode autodiff.
///
/// Copies share storage (handle semantics, like a framework tensor); use
/// clone() for an independent copy. The training path uses float; the
/// double instantiation exists for 64-bit gradient oracles.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static BasicTensor zeros(const Shape& shape);
    static BasicTensor constant(const Shape& shape, T value);
    /// Uniform in [lo, hi); bitwise reproducible for a fixed seed.
    static BasicTensor uniform(const Shape& shape, T lo, T hi, std::uint64_t seed);
    /// Kaiming-uniform: U[-sqrt(6/fan_in), +sqrt(6/fan_in)].
    static BasicTensor kaiming(const Shape& shape, std::size_t fan_in, std::uint64_t seed);
    static BasicTensor from_data(const Shape& shape, std::vector<T> values);
    static BasicTensor scalar(T value) { return from_data({1}, {value}); }

    bool defined() const noexcept { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t extent(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    std::span<T> mutable_data() { return impl_->data; }
    const std::vector<T>& values() const { return impl_->data; }
    T item() const;
    T at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

    bool requires_grad() const { return impl_->requires_grad; }
    BasicTensor& set_requires_grad(bool on);
    bool has_grad() const { return !impl_->grad.empty(); }
    /// Gradient values; all zeros when nothing has been accumulated yet.
    std::vector<T> grad() const;
    void zero_grad() { impl_->grad.clear(); }

    OpKind op_kind() const { return impl_->node ? impl_->node->kind : OpKind::Leaf; }

    /// Reverse-mode sweep from this scalar. Gradients accumulate additively
    /// into every reachable tensor that requires them.
    void backward() const;

    /// Same values, no graph linkage, no gradient tracking.
    BasicTensor detach() const;
    /// Deep copy of values (and requires_grad flag); no graph linkage.
    BasicTensor clone() const;

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Element-type conversion (no graph linkage).
template <class To, class From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& src) {
    std::vector<To> values(src.data().begin(), src.data().end());
    auto out = BasicTensor<To>::from_data(src.shape(), std::move(values));
    out.set_requires_grad(src.requires_grad());
    return out;
}

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace shedd
