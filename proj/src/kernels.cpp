#include "shedd/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace shedd::kernels {

namespace {

// Output columns [lo, hi) whose input column ow*stride + kx - padding is in range.
struct ColumnRange {
    std::size_t lo;
    std::size_t hi;
};

ColumnRange valid_columns(const ConvGeometry& g, std::size_t kx) {
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    const auto p = static_cast<std::ptrdiff_t>(g.padding);
    const auto k = static_cast<std::ptrdiff_t>(kx);
    const auto w = static_cast<std::ptrdiff_t>(g.in_w);
    const auto ow = static_cast<std::ptrdiff_t>(g.out_w());
    std::ptrdiff_t lo = p > k ? (p - k + s - 1) / s : 0;
    std::ptrdiff_t last = w - 1 + p - k;
    std::ptrdiff_t hi = last < 0 ? 0 : last / s + 1;
    lo = std::min(lo, ow);
    hi = std::clamp(hi, lo, ow);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Input row for an output row, or -1 when it falls in the padding.
std::ptrdiff_t input_row(const ConvGeometry& g, std::size_t oy, std::size_t ky) {
    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
    return (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) ? -1 : iy;
}

}  // namespace

void set_num_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(std::max(1, n));
#else
    (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

// Register-blocked C[m,n] += A[m,k] B[k,n] (row-major, leading dimensions
// given). Each C element accumulates over p in increasing order, so the
// result is independent of how rows are split across threads.
template <class T>
void gemm_rows(std::size_t row_lo, std::size_t row_hi, std::size_t n, std::size_t k, const T* a, std::size_t lda,
               const T* b, std::size_t ldb, T* c, std::size_t ldc) {
    constexpr std::size_t MR = 8;
    constexpr std::size_t NR = 64 / sizeof(T) * 2;
    std::size_t i = row_lo;
    for (; i + MR <= row_hi; i += MR) {
        std::size_t j = 0;
        for (; j + NR <= n; j += NR) {
            T acc[MR][NR];
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t jj = 0; jj < NR; ++jj) acc[r][jj] = c[(i + r) * ldc + j + jj];
            for (std::size_t p = 0; p < k; ++p) {
                const T* brow = b + p * ldb + j;
                for (std::size_t r = 0; r < MR; ++r) {
                    const T av = a[(i + r) * lda + p];
                    for (std::size_t jj = 0; jj < NR; ++jj) acc[r][jj] += av * brow[jj];
                }
            }
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t jj = 0; jj < NR; ++jj) c[(i + r) * ldc + j + jj] = acc[r][jj];
        }
        if (j < n) {
            for (std::size_t r = 0; r < MR; ++r) {
                T* crow = c + (i + r) * ldc;
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = a[(i + r) * lda + p];
                    const T* brow = b + p * ldb;
                    for (std::size_t jj = j; jj < n; ++jj) crow[jj] += av * brow[jj];
                }
            }
        }
    }
    for (; i < row_hi; ++i) {
        T* crow = c + i * ldc;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * lda + p];
            const T* brow = b + p * ldb;
            for (std::size_t jj = 0; jj < n; ++jj) crow[jj] += av * brow[jj];
        }
    }
}

// C[m,n] += A[m,k] B[n,k]^T as blocked dot products. Each dot product keeps
// L lane-wise partial sums that are combined in a fixed order at the end.
template <class T>
void gemm_nt_rows(std::size_t row_lo, std::size_t row_hi, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
    constexpr std::size_t MR = 4, NR = 4, L = 64 / sizeof(T);
    const std::size_t k_main = k - k % L;
    auto finish = [&](std::size_t i, std::size_t j, const T* lanes) {
        T acc{0};
        for (std::size_t l = 0; l < L; ++l) acc += lanes[l];
        for (std::size_t p = k_main; p < k; ++p) acc += a[i * lda + p] * b[j * ldb + p];
        c[i * ldc + j] += acc;
    };
    std::size_t i = row_lo;
    for (; i + MR <= row_hi; i += MR) {
        std::size_t j = 0;
        for (; j + NR <= n; j += NR) {
            T acc[MR][NR][L] = {};
            for (std::size_t p = 0; p < k_main; p += L)
                for (std::size_t r = 0; r < MR; ++r)
                    for (std::size_t q = 0; q < NR; ++q)
                        for (std::size_t l = 0; l < L; ++l)
                            acc[r][q][l] += a[(i + r) * lda + p + l] * b[(j + q) * ldb + p + l];
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t q = 0; q < NR; ++q) finish(i + r, j + q, acc[r][q]);
        }
        for (; j < n; ++j)
            for (std::size_t r = 0; r < MR; ++r) {
                T lanes[L] = {};
                for (std::size_t p = 0; p < k_main; p += L)
                    for (std::size_t l = 0; l < L; ++l) lanes[l] += a[(i + r) * lda + p + l] * b[j * ldb + p + l];
                finish(i + r, j, lanes);
            }
    }
    for (; i < row_hi; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T lanes[L] = {};
            for (std::size_t p = 0; p < k_main; p += L)
                for (std::size_t l = 0; l < L; ++l) lanes[l] += a[i * lda + p + l] * b[j * ldb + p + l];
            finish(i, j, lanes);
        }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
    constexpr std::size_t block = 8;
    const auto blocks = static_cast<std::int64_t>((m + block - 1) / block);
#pragma omp parallel for schedule(static) if (blocks > 1 && m * n * k > 32768)
    for (std::int64_t bi = 0; bi < blocks; ++bi) {
        const std::size_t lo = static_cast<std::size_t>(bi) * block;
        gemm_nt_rows(lo, std::min(m, lo + block), n, k, a, lda, b, ldb, c, ldc);
    }
}

// Row blocks of C are distributed over threads.
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
          std::size_t ldc) {
    constexpr std::size_t block = 16;
    const auto blocks = static_cast<std::int64_t>((m + block - 1) / block);
#pragma omp parallel for schedule(static) if (blocks > 1 && m * n * k > 32768)
    for (std::int64_t bi = 0; bi < blocks; ++bi) {
        const std::size_t lo = static_cast<std::size_t>(bi) * block;
        gemm_rows(lo, std::min(m, lo + block), n, k, a, lda, b, ldb, c, ldc);
    }
}

// Single-threaded variant for use inside an already parallel region.
template <class T>
void gemm_serial(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
                 T* c, std::size_t ldc) {
    gemm_rows(std::size_t{0}, m, n, k, a, lda, b, ldb, c, ldc);
}

// col[(ic*kh + ky)*kw + kx][oy*ow + ox] = x[ic][oy*s + ky - p][ox*s + kx - p] (0 in padding).
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), n = oh * ow;
    for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
        const T* xin = x + ic * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                T* dst = col + ((ic * g.kernel_h + ky) * g.kernel_w + kx) * n;
                const auto cols = valid_columns(g, kx);
                const std::size_t shift = kx - g.padding;  // wraps; index stays in range for ox in cols
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    T* drow = dst + oy * ow;
                    const auto iy = input_row(g, oy, ky);
                    if (iy < 0) {
                        std::fill(drow, drow + ow, T{0});
                        continue;
                    }
                    std::fill(drow, drow + cols.lo, T{0});
                    std::fill(drow + cols.hi, drow + ow, T{0});
                    const T* xrow = xin + static_cast<std::size_t>(iy) * g.in_w;
                    if (g.stride == 1) {
                        std::copy(xrow + cols.lo + shift, xrow + cols.hi + shift, drow + cols.lo);
                    } else {
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox] = xrow[ox * g.stride + shift];
                    }
                }
            }
    }
}

// Adjoint of im2col: x[ic][...] += col[...].
template <class T>
void col2im_add(const ConvGeometry& g, const T* col, T* x) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), n = oh * ow;
    for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
        T* xin = x + ic * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const T* src = col + ((ic * g.kernel_h + ky) * g.kernel_w + kx) * n;
                const auto cols = valid_columns(g, kx);
                const std::size_t shift = kx - g.padding;  // wraps; index stays in range for ox in cols
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = input_row(g, oy, ky);
                    if (iy < 0) continue;
                    T* xrow = xin + static_cast<std::size_t>(iy) * g.in_w;
                    const T* srow = src + oy * ow;
                    if (g.stride == 1) {
                        T* out = xrow + shift;
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) out[ox] += srow[ox];
                    } else {
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) xrow[ox * g.stride + shift] += srow[ox];
                    }
                }
            }
    }
}

template <class T>
std::vector<T> transposed(const T* a, std::size_t rows, std::size_t cols) {
    std::vector<T> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
    return t;
}

}  // namespace

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<T> out) {
    const std::size_t n = g.out_h() * g.out_w();
    const std::size_t kdim = g.in_channels * g.kernel_h * g.kernel_w;
    const std::size_t in_size = g.in_channels * g.in_h * g.in_w, out_size = g.out_channels * n;
    const auto batch = static_cast<std::int64_t>(g.batch);

#pragma omp parallel
    {
        std::vector<T> col(kdim * n);
#pragma omp for schedule(static)
        for (std::int64_t bi = 0; bi < batch; ++bi) {
            const auto b = static_cast<std::size_t>(bi);
            im2col(g, x.data() + b * in_size, col.data());
            T* y = out.data() + b * out_size;
            std::fill(y, y + out_size, T{0});
            gemm_serial(g.out_channels, n, kdim, w.data(), kdim, col.data(), n, y, n);
        }
    }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out, std::span<const T> w,
                           std::span<T> grad_x) {
    const std::size_t n = g.out_h() * g.out_w();
    const std::size_t kdim = g.in_channels * g.kernel_h * g.kernel_w;
    const std::size_t in_size = g.in_channels * g.in_h * g.in_w, out_size = g.out_channels * n;
    const auto wt = transposed(w.data(), g.out_channels, kdim);  // [kdim, oc]
    const auto batch = static_cast<std::int64_t>(g.batch);

#pragma omp parallel
    {
        std::vector<T> col(kdim * n);
#pragma omp for schedule(static)
        for (std::int64_t bi = 0; bi < batch; ++bi) {
            const auto b = static_cast<std::size_t>(bi);
            std::fill(col.begin(), col.end(), T{0});
            gemm_serial(kdim, n, g.out_channels, wt.data(), g.out_channels, grad_out.data() + b * out_size, n,
                        col.data(), n);
            col2im_add(g, col.data(), grad_x.data() + b * in_size);
        }
    }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> grad_out,
                            std::span<T> grad_w) {
    const std::size_t n = g.out_h() * g.out_w();
    const std::size_t kdim = g.in_channels * g.kernel_h * g.kernel_w;
    const std::size_t in_size = g.in_channels * g.in_h * g.in_w, out_size = g.out_channels * n;

    // grad_w[oc, kdim] += gy_b[oc, n] col_b[kdim, n]^T, samples visited in order.
    std::vector<T> col(kdim * n);
    for (std::size_t b = 0; b < g.batch; ++b) {
        im2col(g, x.data() + b * in_size, col.data());
        gemm_nt(g.out_channels, kdim, n, grad_out.data() + b * out_size, n, col.data(), n, grad_w.data(), kdim);
    }
}

template <class T>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c) {
    gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n);
}

template <class T>
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c) {
    gemm_nt(m, n, k, a.data(), k, b.data(), k, c.data(), n);
}

template <class T>
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
               std::span<T> c) {
    const auto at = transposed(a.data(), k, m);  // [m, k]
    gemm(m, n, k, at.data(), k, b.data(), n, c.data(), n);
}

#define SHEDD_INSTANTIATE_KERNELS(T)                                                                          \
    template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>); \
    template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,       \
                                           std::span<T>);                                                     \
    template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,      \
                                            std::span<T>);                                                    \
    template void matmul_nn<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>, \
                               std::span<T>);                                                                 \
    template void matmul_nt<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>, \
                               std::span<T>);                                                                 \
    template void matmul_tn<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>, \
                               std::span<T>);

SHEDD_INSTANTIATE_KERNELS(float)
SHEDD_INSTANTIATE_KERNELS(double)
#undef SHEDD_INSTANTIATE_KERNELS

}  // namespace shedd::kernels
