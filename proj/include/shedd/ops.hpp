#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "shedd/tensor.hpp"

namespace shedd {

// Differentiable tensor operations. Binary element-wise ops require equal
// shapes; the only broadcasting is scalar * tensor (scale, add_scalar) and
// the explicit bias ops.

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

/// Cross-correlation of x[b,c_in,h,w] with kernel[c_out,c_in,kh,kw].
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset);

/// Lower clamp applied by log() before evaluation.
inline constexpr double kLogClamp = 1e-12;

/// Natural log of max(x, kLogClamp); zero gradient where clamped.
template <class T>
BasicTensor<T> log(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> exp(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> sqrt(const BasicTensor<T>& x);

/// Reductions. Without an axis the result has shape [1]; with an axis
/// that extent is removed (a rank-1 input reduces to shape [1]).
template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x, std::optional<std::size_t> axis = std::nullopt);
template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::optional<std::size_t> axis = std::nullopt);

template <class T>
struct MaxResult {
    BasicTensor<T> values;
    std::vector<std::size_t> indices;  // argmax along the reduced axis (first on ties)
};

template <class T>
MaxResult<T> max(const BasicTensor<T>& x, std::optional<std::size_t> axis = std::nullopt);

/// Row-wise softmax of x[b,n].
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x);

/// x[b,n] + bias[n] on every row.
template <class T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);
/// x[b,c,h,w] + bias[c] on every pixel.
template <class T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);

/// Non-overlapping window x window average pooling; trailing rows/cols dropped.
template <class T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, std::size_t window);
/// Mean over spatial extents: [b,c,h,w] -> [b,c].
template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// Columns [begin, end) of x[b,n].
template <class T>
BasicTensor<T> slice_columns(const BasicTensor<T>& x, std::size_t begin, std::size_t end);
template <class T>
BasicTensor<T> concat_columns(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// out[i] = x[i, index[i]] for x[b,n].
template <class T>
BasicTensor<T> pick(const BasicTensor<T>& x, const std::vector<std::size_t>& index);

/// Per-row cosine similarity <a_i,b_i> / (|a_i| |b_i| + eps) -> [b].
template <class T>
BasicTensor<T> row_cosine(const BasicTensor<T>& a, const BasicTensor<T>& b, T eps);

/// Row-wise argmax of x[b,n].
template <class T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& x);

}  // namespace shedd
