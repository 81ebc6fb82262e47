#include "shedd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "shedd/rng.hpp"

namespace shedd {

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extent must be positive: " + shape_to_string(shape));
    }
}
}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Relu: return "relu";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "div";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Log: return "log";
        case OpKind::Exp: return "exp";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::Max: return "max";
        case OpKind::Softmax: return "softmax";
        case OpKind::AddRowBias: return "add_row_bias";
        case OpKind::AddChannelBias: return "add_channel_bias";
        case OpKind::AvgPool2d: return "avg_pool2d";
        case OpKind::GlobalAvgPool: return "global_avg_pool";
        case OpKind::SliceColumns: return "slice_columns";
        case OpKind::ConcatColumns: return "concat_columns";
        case OpKind::Pick: return "pick";
        case OpKind::RowCosine: return "row_cosine";
    }
    return "unknown";
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(const Shape& shape) {
    return constant(shape, T{0});
}

template <class T>
BasicTensor<T> BasicTensor<T>::constant(const Shape& shape, T value) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = shape;
    impl->data.assign(shape_numel(shape), value);
    return BasicTensor(std::move(impl));
}

template <class T>
BasicTensor<T> BasicTensor<T>::uniform(const Shape& shape, T lo, T hi, std::uint64_t seed) {
    if (!(lo < hi)) throw ShapeError("uniform init requires lo < hi");
    auto t = zeros(shape);
    Rng rng(seed);
    for (auto& v : t.impl_->data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <class T>
BasicTensor<T> BasicTensor<T>::kaiming(const Shape& shape, std::size_t fan_in, std::uint64_t seed) {
    if (fan_in == 0) throw ShapeError("kaiming init requires fan_in >= 1");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return uniform(shape, static_cast<T>(-bound), static_cast<T>(bound), seed);
}

template <class T>
BasicTensor<T> BasicTensor<T>::from_data(const Shape& shape, std::vector<T> values) {
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("data length " + std::to_string(values.size()) + " does not match shape " +
                         shape_to_string(shape));
    }
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = shape;
    impl->data = std::move(values);
    return BasicTensor(std::move(impl));
}

template <class T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (!on) impl_->grad.clear();
    return *this;
}

template <class T>
std::vector<T> BasicTensor<T>::grad() const {
    if (impl_->grad.empty()) return std::vector<T>(impl_->data.size(), T{0});
    return impl_->grad;
}

template <class T>
void BasicTensor<T>::backward() const {
    if (numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " + shape_to_string(shape()));
    }
    if (!impl_->requires_grad) return;  // nothing reachable

    // Iterative post-order DFS gives a topological order of the graph.
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> visited;
    std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack{{impl_.get(), 0}};
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (node->node && next < node->node->parents.size()) {
            TensorImpl<T>* parent = node->node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    impl_->grad_sink()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<T>* t = *it;
        if (t->node && t->node->backward && !t->grad.empty()) t->node->backward(*t);
    }
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return from_data(shape(), impl_->data);
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
    auto out = from_data(shape(), impl_->data);
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace shedd
