#include "shedd/nn.hpp"

#include <cmath>

#include "shedd/ops.hpp"

namespace shedd {

template <class T>
LinearLayer<T>::LinearLayer(std::size_t in_features, std::size_t out_features, std::uint64_t seed)
    : weight(BasicTensor<T>::kaiming({out_features, in_features}, in_features, seed)),
      bias(BasicTensor<T>::zeros({out_features})) {
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
}

template <class T>
BasicTensor<T> LinearLayer<T>::forward(const BasicTensor<T>& x) const {
    if (x.rank() != 2 || x.extent(1) != in_features()) {
        throw ShapeError("linear: expected [b," + std::to_string(in_features()) + "], got " +
                         shape_to_string(x.shape()));
    }
    return add_row_bias(matmul(x, transpose(weight)), bias);
}

template <class T>
void LinearLayer<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

template <class T>
ConvBlock<T>::ConvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                        std::size_t stride_, std::size_t padding_, std::uint64_t seed)
    : kernel(BasicTensor<T>::kaiming({out_channels, in_channels, kernel_size, kernel_size},
                                     in_channels * kernel_size * kernel_size, seed)),
      bias(BasicTensor<T>::zeros({out_channels})),
      stride(stride_),
      padding(padding_) {
    kernel.set_requires_grad(true);
    bias.set_requires_grad(true);
}

template <class T>
BasicTensor<T> ConvBlock<T>::forward(const BasicTensor<T>& x) const {
    auto y = relu(add_channel_bias(conv2d(x, kernel, stride, padding), bias));
    return avg_pool2d(y, pool);
}

template <class T>
void ConvBlock<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".bias", bias});
}

template <class T>
std::size_t ConvBlock<T>::output_extent(std::size_t in) const {
    const std::size_t k = kernel.extent(2);
    if (in + 2 * padding < k) return 0;
    return ((in + 2 * padding - k) / stride + 1) / pool;
}

template struct LinearLayer<float>;
template struct LinearLayer<double>;
template struct ConvBlock<float>;
template struct ConvBlock<double>;

AdamW::AdamW(ParameterList<float> params, AdamWOptions options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0f);
        v_.emplace_back(p.tensor.numel(), 0.0f);
    }
}

void AdamW::step() {
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) throw ContractError("adamw: parameter '" + p.name + "' has no gradient");
    }
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto theta = params_[i].tensor.mutable_data();
        const auto& g = params_[i].tensor.impl()->grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double m_hat = mj / bc1;
            const double v_hat = vj / bc2;
            const double t = theta[j];
            theta[j] = static_cast<float>(
                t - options_.learning_rate * (m_hat / (std::sqrt(v_hat) + options_.eps) + options_.weight_decay * t));
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

EmaSwap::EmaSwap(Ema* owner, ParameterList<float> params, std::vector<std::vector<float>> saved)
    : owner_(owner), params_(std::move(params)), saved_(std::move(saved)) {}

EmaSwap::EmaSwap(EmaSwap&& other) noexcept
    : owner_(other.owner_), params_(std::move(other.params_)), saved_(std::move(other.saved_)) {
    other.owner_ = nullptr;
}

EmaSwap::~EmaSwap() {
    if (owner_) restore();
}

void EmaSwap::restore() {
    if (!owner_) throw ContractError("ema: swap already restored");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto dst = params_[i].tensor.mutable_data();
        std::copy(saved_[i].begin(), saved_[i].end(), dst.begin());
    }
    owner_->swapped_ = false;
    owner_ = nullptr;
}

Ema::Ema(const ParameterList<float>& params, double momentum) : momentum_(momentum) {
    if (momentum < 0.0 || momentum > 1.0) throw ContractError("ema: momentum must lie in [0, 1]");
    for (const auto& p : params) shadow_.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
}

void Ema::check_layout(const ParameterList<float>& params) const {
    if (params.size() != shadow_.size()) throw ShapeError("ema: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].tensor.numel() != shadow_[i].size())
            throw ShapeError("ema: shape mismatch for '" + params[i].name + "'");
}

void Ema::update(const ParameterList<float>& params) {
    if (swapped_) throw ContractError("ema: update while shadow weights are swapped in");
    check_layout(params);
    const double m = momentum_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto src = params[i].tensor.data();
        auto& s = shadow_[i];
        for (std::size_t j = 0; j < s.size(); ++j)
            s[j] = static_cast<float>(m * static_cast<double>(s[j]) + (1.0 - m) * static_cast<double>(src[j]));
    }
}

EmaSwap Ema::swap_in(const ParameterList<float>& params) {
    if (swapped_) throw ContractError("ema: shadow weights already swapped in");
    check_layout(params);
    std::vector<std::vector<float>> saved;
    saved.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].tensor.data();
        saved.emplace_back(values.begin(), values.end());
        auto dst = params[i].tensor.impl()->data.begin();
        std::copy(shadow_[i].begin(), shadow_[i].end(), dst);
    }
    swapped_ = true;
    return EmaSwap(this, params, std::move(saved));
}

}  // namespace shedd
