#pragma once

#include <cstddef>
#include <span>

namespace shedd::kernels {

/// Geometry of a batched 2-D cross-correlation (NCHW input, OIHW kernel).
struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t in_h = 1;
    std::size_t in_w = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
    std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
    std::size_t weight_size() const { return out_channels * in_channels * kernel_h * kernel_w; }
    std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
};

// Parallel kernels. Work is split over output elements only, so every value
// is produced by one thread in a fixed order and results do not depend on
// the thread count.

/// out = x (*) w. Overwrites `out`.
template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> out);

/// grad_x += dL/dx given dL/dout.
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out, std::span<const T> w,
                           std::span<T> grad_x);

/// grad_w += dL/dw given dL/dout.
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> grad_out,
                            std::span<T> grad_w);

/// c += a[m,k] * b[k,n]
template <class T>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c);

/// c += a[m,k] * b[n,k]^T
template <class T>
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c);

/// c += a[k,m]^T * b[k,n]
template <class T>
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c);

/// Caps the thread count used by the parallel kernels (>= 1).
void set_num_threads(int n);
int num_threads();

/// Plain nested-loop implementations, single-threaded. Kept as the
/// correctness oracle for the parallel kernels and as a benchmark baseline.
namespace reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> out);

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out, std::span<const T> w,
                           std::span<T> grad_x);

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> grad_out,
                            std::span<T> grad_w);

template <class T>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c);

}  // namespace reference

}  // namespace shedd::kernels
