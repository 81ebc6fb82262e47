#include <cstdint>

#include "shedd/kernels.hpp"

namespace shedd::kernels::reference {

namespace {
// Input value at padded coordinates, zero outside the image.
template <class T>
T padded(const ConvGeometry& g, std::span<const T> x, std::size_t b, std::size_t c, std::int64_t y, std::int64_t xx) {
    if (y < 0 || xx < 0 || y >= static_cast<std::int64_t>(g.in_h) || xx >= static_cast<std::int64_t>(g.in_w))
        return T{0};
    return x[((b * g.in_channels + c) * g.in_h + static_cast<std::size_t>(y)) * g.in_w + static_cast<std::size_t>(xx)];
}
}  // namespace

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> out) {
    const auto oh = g.out_h(), ow = g.out_w();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oc = 0; oc < g.out_channels; ++oc)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    T acc{0};
                    for (std::size_t ic = 0; ic < g.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                                                static_cast<std::int64_t>(g.padding);
                                const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                                                static_cast<std::int64_t>(g.padding);
                                acc += w[((oc * g.in_channels + ic) * g.kernel_h + ky) * g.kernel_w + kx] *
                                       padded(g, x, b, ic, iy, ix);
                            }
                    out[((b * g.out_channels + oc) * oh + oy) * ow + ox] = acc;
                }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out, std::span<const T> w,
                           std::span<T> grad_x) {
    const auto oh = g.out_h(), ow = g.out_w();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oc = 0; oc < g.out_channels; ++oc)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const T gy = grad_out[((b * g.out_channels + oc) * oh + oy) * ow + ox];
                    for (std::size_t ic = 0; ic < g.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                                                static_cast<std::int64_t>(g.padding);
                                const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                                                static_cast<std::int64_t>(g.padding);
                                if (iy < 0 || ix < 0 || iy >= static_cast<std::int64_t>(g.in_h) ||
                                    ix >= static_cast<std::int64_t>(g.in_w))
                                    continue;
                                grad_x[((b * g.in_channels + ic) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                       static_cast<std::size_t>(ix)] +=
                                    gy * w[((oc * g.in_channels + ic) * g.kernel_h + ky) * g.kernel_w + kx];
                            }
                }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> grad_out,
                            std::span<T> grad_w) {
    const auto oh = g.out_h(), ow = g.out_w();
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
        for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    T acc{0};
                    for (std::size_t b = 0; b < g.batch; ++b)
                        for (std::size_t oy = 0; oy < oh; ++oy)
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                                                static_cast<std::int64_t>(g.padding);
                                const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                                                static_cast<std::int64_t>(g.padding);
                                acc += grad_out[((b * g.out_channels + oc) * oh + oy) * ow + ox] *
                                       padded(g, x, b, ic, iy, ix);
                            }
                    grad_w[((oc * g.in_channels + ic) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
                }
}

template <class T>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T acc{0};
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] += acc;
        }
}

#define SHEDD_INSTANTIATE_REFERENCE(T)                                                                        \
    template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>); \
    template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,       \
                                           std::span<T>);                                                     \
    template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,      \
                                            std::span<T>);                                                    \
    template void matmul_nn<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>, \
                               std::span<T>);

SHEDD_INSTANTIATE_REFERENCE(float)
SHEDD_INSTANTIATE_REFERENCE(double)
#undef SHEDD_INSTANTIATE_REFERENCE

}  // namespace shedd::kernels::reference
