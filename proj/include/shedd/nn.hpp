#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shedd/tensor.hpp"

namespace shedd {

template <class T>
struct NamedParameter {
    std::string name;
    BasicTensor<T> tensor;
};

template <class T>
using ParameterList = std::vector<NamedParameter<T>>;

/// Copies values between two parameter lists of identical layout (used to
/// mirror a float model into a double one for gradient oracles).
template <class To, class From>
void copy_parameter_values(const ParameterList<From>& src, ParameterList<To>& dst) {
    if (src.size() != dst.size()) throw ShapeError("parameter lists differ in length");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].tensor.shape() != dst[i].tensor.shape())
            throw ShapeError("parameter '" + src[i].name + "' differs in shape");
        auto out = dst[i].tensor.mutable_data();
        const auto in = src[i].tensor.data();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<To>(in[j]);
    }
}

/// Fully connected layer: y = x W^T + b.
template <class T>
struct LinearLayer {
    BasicTensor<T> weight;  // [out, in]
    BasicTensor<T> bias;    // [out]

    LinearLayer() = default;
    /// Kaiming-uniform weight, zero bias.
    LinearLayer(std::size_t in_features, std::size_t out_features, std::uint64_t seed);

    std::size_t in_features() const { return weight.extent(1); }
    std::size_t out_features() const { return weight.extent(0); }

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;
};

/// conv -> bias -> relu -> 2x2 average pool.
template <class T>
struct ConvBlock {
    BasicTensor<T> kernel;  // [c_out, c_in, k, k]
    BasicTensor<T> bias;    // [c_out]
    std::size_t stride = 1;
    std::size_t padding = 1;
    std::size_t pool = 2;

    ConvBlock() = default;
    ConvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, std::size_t stride,
              std::size_t padding, std::uint64_t seed);

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    void collect(const std::string& prefix, ParameterList<T>& out) const;

    /// Spatial extent after this block for an input extent.
    std::size_t output_extent(std::size_t in) const;
};

struct AdamWOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

/// AdamW with decoupled weight decay:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
class AdamW {
public:
    AdamW(ParameterList<float> params, AdamWOptions options);

    /// Throws ContractError if any parameter has no gradient buffer.
    void step();
    void zero_grad();

    const AdamWOptions& options() const { return options_; }
    std::uint64_t step_count() const { return step_; }
    const ParameterList<float>& parameters() const { return params_; }

    std::vector<std::vector<float>>& first_moments() { return m_; }
    std::vector<std::vector<float>>& second_moments() { return v_; }
    const std::vector<std::vector<float>>& first_moments() const { return m_; }
    const std::vector<std::vector<float>>& second_moments() const { return v_; }
    /// Restores optimizer progress from a checkpoint.
    void set_step_count(std::uint64_t step) { step_ = step; }

private:
    ParameterList<float> params_;
    AdamWOptions options_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    std::uint64_t step_ = 0;
};

class Ema;

/// Restore token returned by Ema::swap_in. Puts the raw parameter values
/// back on restore() or destruction.
class EmaSwap {
public:
    EmaSwap(EmaSwap&& other) noexcept;
    EmaSwap& operator=(EmaSwap&&) = delete;
    EmaSwap(const EmaSwap&) = delete;
    EmaSwap& operator=(const EmaSwap&) = delete;
    ~EmaSwap();

    void restore();

private:
    friend class Ema;
    EmaSwap(Ema* owner, ParameterList<float> params, std::vector<std::vector<float>> saved);

    Ema* owner_;
    ParameterList<float> params_;
    std::vector<std::vector<float>> saved_;
};

/// Exponential moving average of parameters: shadow <- m shadow + (1-m) param.
class Ema {
public:
    Ema(const ParameterList<float>& params, double momentum);

    void update(const ParameterList<float>& params);
    /// Loads the shadow values into `params`. Only one swap may be active.
    [[nodiscard]] EmaSwap swap_in(const ParameterList<float>& params);

    double momentum() const { return momentum_; }
    bool swapped() const { return swapped_; }
    std::vector<std::vector<float>>& shadow() { return shadow_; }
    const std::vector<std::vector<float>>& shadow() const { return shadow_; }

private:
    friend class EmaSwap;
    void check_layout(const ParameterList<float>& params) const;

    std::vector<std::vector<float>> shadow_;
    double momentum_;
    bool swapped_ = false;
};

extern template struct LinearLayer<float>;
extern template struct LinearLayer<double>;
extern template struct ConvBlock<float>;
extern template struct ConvBlock<double>;

}  // namespace shedd
