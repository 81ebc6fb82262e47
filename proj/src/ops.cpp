#include "shedd/ops.hpp"

#include <algorithm>
#include <cmath>

#include "shedd/kernels.hpp"

namespace shedd {

namespace {

template <class T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <class T>
using BackwardFn = std::function<void(const TensorImpl<T>&)>;

// Wraps computed values into a tensor and links it into the graph when any
// parent tracks gradients and graph construction is enabled.
template <class T>
BasicTensor<T> make_result(const Shape& shape, std::vector<T> values, OpKind kind, std::vector<ImplPtr<T>> parents,
                           BackwardFn<T> backward) {
    auto out = BasicTensor<T>::from_data(shape, std::move(values));
    const bool track = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                     [](const ImplPtr<T>& p) { return p->requires_grad; });
    if (track) {
        out.impl()->requires_grad = true;
        out.impl()->node = std::make_unique<GraphNode<T>>(GraphNode<T>{kind, std::move(parents), std::move(backward)});
    }
    return out;
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

template <class T>
void require_rank(const BasicTensor<T>& a, std::size_t rank, const char* op) {
    if (a.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(a.shape()));
    }
}

// Unary element-wise op; `deriv(x, y)` gives dy/dx from input and output.
template <class T, class Fwd, class Deriv>
BasicTensor<T> unary(const BasicTensor<T>& x, OpKind kind, Fwd fwd, Deriv deriv) {
    std::vector<T> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    auto xi = x.impl();
    return make_result<T>(x.shape(), std::move(out), kind, {xi}, [xi, deriv](const TensorImpl<T>& o) {
        auto g = xi->grad_sink();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * deriv(xi->data[i], o.data[i]);
    });
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
    Shape reduced;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw ShapeError("reduction axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != axis) s.reduced.push_back(shape[i]);
    if (s.reduced.empty()) s.reduced.push_back(1);
    return s;
}

AxisSplit whole(const Shape& shape) {
    AxisSplit s;
    s.extent = shape_numel(shape);
    s.reduced = {1};
    return s;
}

// Sum (scaled by `factor`) along the split axis; accumulates in double.
template <class T>
BasicTensor<T> reduce_sum(const BasicTensor<T>& x, const AxisSplit& s, T factor, OpKind kind) {
    std::vector<T> out(s.outer * s.inner);
    const auto in = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            double acc = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) acc += in[(o * s.extent + e) * s.inner + i];
            out[o * s.inner + i] = static_cast<T>(acc * factor);
        }
    auto xi = x.impl();
    return make_result<T>(s.reduced, std::move(out), kind, {xi}, [xi, s, factor](const TensorImpl<T>& o) {
        auto g = xi->grad_sink();
        for (std::size_t oo = 0; oo < s.outer; ++oo)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const T gv = o.grad[oo * s.inner + i] * factor;
                for (std::size_t e = 0; e < s.extent; ++e) g[(oo * s.extent + e) * s.inner + i] += gv;
            }
    });
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) {
        throw ShapeError("matmul: inner extents differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    std::vector<T> out(m * n, T{0});
    kernels::matmul_nn<T>(m, k, n, a.data(), b.data(), out);
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>({m, n}, std::move(out), OpKind::MatMul, {ai, bi}, [ai, bi, m, k, n](const TensorImpl<T>& o) {
        if (auto ga = ai->grad_sink(); !ga.empty()) kernels::matmul_nt<T>(m, n, k, o.grad, bi->data, ga);
        if (auto gb = bi->grad_sink(); !gb.empty()) kernels::matmul_tn<T>(k, m, n, ai->data, o.grad, gb);
    });
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    require_rank(a, 2, "transpose");
    const std::size_t r = a.extent(0), c = a.extent(1);
    std::vector<T> out(r * c);
    const auto in = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
    auto ai = a.impl();
    return make_result<T>({c, r}, std::move(out), OpKind::Transpose, {ai}, [ai, r, c](const TensorImpl<T>& o) {
        auto g = ai->grad_sink();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    });
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, std::size_t stride, std::size_t padding) {
    require_rank(x, 4, "conv2d");
    require_rank(kernel, 4, "conv2d");
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    if (kernel.extent(1) != x.extent(1)) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.extent(1)) + " input channels, got " +
                         std::to_string(x.extent(1)));
    }
    kernels::ConvGeometry g{x.extent(0), x.extent(1), x.extent(2), x.extent(3), kernel.extent(0),
                            kernel.extent(2), kernel.extent(3), stride, padding};
    if (g.in_h + 2 * padding < g.kernel_h || g.in_w + 2 * padding < g.kernel_w) {
        throw ShapeError("conv2d: kernel " + shape_to_string(kernel.shape()) + " larger than padded input " +
                         shape_to_string(x.shape()));
    }
    std::vector<T> out(g.output_size());
    kernels::conv2d_forward<T>(g, x.data(), kernel.data(), out);
    auto xi = x.impl(), ki = kernel.impl();
    return make_result<T>({g.batch, g.out_channels, g.out_h(), g.out_w()}, std::move(out), OpKind::Conv2d, {xi, ki},
                          [xi, ki, g](const TensorImpl<T>& o) {
                              if (auto gx = xi->grad_sink(); !gx.empty())
                                  kernels::conv2d_backward_input<T>(g, o.grad, ki->data, gx);
                              if (auto gk = ki->grad_sink(); !gk.empty())
                                  kernels::conv2d_backward_weight<T>(g, xi->data, o.grad, gk);
                          });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    return unary<T>(
        x, OpKind::Relu, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), OpKind::Add, {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
        auto ga = ai->grad_sink();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
        auto gb = bi->grad_sink();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i];
    });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), OpKind::Sub, {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
        auto ga = ai->grad_sink();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
        auto gb = bi->grad_sink();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
    });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), OpKind::Mul, {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
        auto ga = ai->grad_sink();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bi->data[i];
        auto gb = bi->grad_sink();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * ai->data[i];
    });
}

template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "div");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), OpKind::Div, {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
        auto ga = ai->grad_sink();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] / bi->data[i];
        auto gb = bi->grad_sink();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i] * o.data[i] / bi->data[i];
    });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    return unary<T>(x, OpKind::Scale, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset) {
    return unary<T>(x, OpKind::AddScalar, [offset](T v) { return v + offset; }, [](T, T) { return T{1}; });
}

template <class T>
BasicTensor<T> log(const BasicTensor<T>& x) {
    const T clamp = static_cast<T>(kLogClamp);
    return unary<T>(
        x, OpKind::Log, [clamp](T v) { return std::log(std::max(v, clamp)); },
        [clamp](T v, T) { return v > clamp ? T{1} / v : T{0}; });
}

template <class T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
    return unary<T>(x, OpKind::Exp, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
BasicTensor<T> sqrt(const BasicTensor<T>& x) {
    return unary<T>(
        x, OpKind::Sqrt, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > T{0} ? T{0.5} / y : T{0}; });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x, std::optional<std::size_t> axis) {
    const auto s = axis ? split_axis(x.shape(), *axis) : whole(x.shape());
    return reduce_sum<T>(x, s, T{1}, OpKind::Sum);
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::optional<std::size_t> axis) {
    const auto s = axis ? split_axis(x.shape(), *axis) : whole(x.shape());
    return reduce_sum<T>(x, s, static_cast<T>(1.0 / static_cast<double>(s.extent)), OpKind::Mean);
}

template <class T>
MaxResult<T> max(const BasicTensor<T>& x, std::optional<std::size_t> axis) {
    const auto s = axis ? split_axis(x.shape(), *axis) : whole(x.shape());
    std::vector<T> out(s.outer * s.inner);
    std::vector<std::size_t> index(out.size());
    const auto in = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            std::size_t best = 0;
            for (std::size_t e = 1; e < s.extent; ++e)
                if (in[(o * s.extent + e) * s.inner + i] > in[(o * s.extent + best) * s.inner + i]) best = e;
            out[o * s.inner + i] = in[(o * s.extent + best) * s.inner + i];
            index[o * s.inner + i] = best;
        }
    auto xi = x.impl();
    auto values = make_result<T>(s.reduced, std::move(out), OpKind::Max, {xi}, [xi, s, index](const TensorImpl<T>& o) {
        auto g = xi->grad_sink();
        for (std::size_t oo = 0; oo < s.outer; ++oo)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t r = oo * s.inner + i;
                g[(oo * s.extent + index[r]) * s.inner + i] += o.grad[r];
            }
    });
    return {std::move(values), std::move(index)};
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
    require_rank(x, 2, "softmax");
    const std::size_t rows = x.extent(0), cols = x.extent(1);
    std::vector<T> out(x.numel());
    const auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = in.data() + r * cols;
        const T peak = *std::max_element(row, row + cols);
        T total{0};
        for (std::size_t c = 0; c < cols; ++c) total += out[r * cols + c] = std::exp(row[c] - peak);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= total;
    }
    auto xi = x.impl();
    return make_result<T>(x.shape(), std::move(out), OpKind::Softmax, {xi}, [xi, rows, cols](const TensorImpl<T>& o) {
        auto g = xi->grad_sink();
        for (std::size_t r = 0; r < rows; ++r) {
            T dot{0};
            for (std::size_t c = 0; c < cols; ++c) dot += o.grad[r * cols + c] * o.data[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c)
                g[r * cols + c] += o.data[r * cols + c] * (o.grad[r * cols + c] - dot);
        }
    });
}

template <class T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
    require_rank(x, 2, "add_row_bias");
    const std::size_t rows = x.extent(0), cols = x.extent(1);
    if (bias.numel() != cols) throw ShapeError("add_row_bias: bias length differs from column count");
    std::vector<T> out(x.data().begin(), x.data().end());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.data()[c];
    auto xi = x.impl(), bi = bias.impl();
    return make_result<T>(x.shape(), std::move(out), OpKind::AddRowBias, {xi, bi},
                          [xi, bi, rows, cols](const TensorImpl<T>& o) {
                              auto gx = xi->grad_sink();
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
                              auto gb = bi->grad_sink();
                              if (gb.empty()) return;
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t c = 0; c < cols; ++c) gb[c] += o.grad[r * cols + c];
                          });
}

template <class T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
    require_rank(x, 4, "add_channel_bias");
    const std::size_t batch = x.extent(0), ch = x.extent(1), plane = x.extent(2) * x.extent(3);
    if (bias.numel() != ch) throw ShapeError("add_channel_bias: bias length differs from channel count");
    std::vector<T> out(x.data().begin(), x.data().end());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
            const T v = bias.data()[c];
            T* p = out.data() + (b * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += v;
        }
    auto xi = x.impl(), bi = bias.impl();
    return make_result<T>(x.shape(), std::move(out), OpKind::AddChannelBias, {xi, bi},
                          [xi, bi, batch, ch, plane](const TensorImpl<T>& o) {
                              auto gx = xi->grad_sink();
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
                              auto gb = bi->grad_sink();
                              if (gb.empty()) return;
                              for (std::size_t c = 0; c < ch; ++c) {
                                  T acc{0};
                                  for (std::size_t b = 0; b < batch; ++b) {
                                      const T* p = o.grad.data() + (b * ch + c) * plane;
                                      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                                  }
                                  gb[c] += acc;
                              }
                          });
}

template <class T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, std::size_t window) {
    require_rank(x, 4, "avg_pool2d");
    if (window == 0 || x.extent(2) < window || x.extent(3) < window)
        throw ShapeError("avg_pool2d: window larger than input " + shape_to_string(x.shape()));
    const std::size_t planes = x.extent(0) * x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t oh = h / window, ow = w / window;
    const T inv = static_cast<T>(1.0 / static_cast<double>(window * window));
    std::vector<T> out(planes * oh * ow);
    const auto in = x.data();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                T acc{0};
                for (std::size_t dy = 0; dy < window; ++dy)
                    for (std::size_t dx = 0; dx < window; ++dx)
                        acc += in[(p * h + oy * window + dy) * w + ox * window + dx];
                out[(p * oh + oy) * ow + ox] = acc * inv;
            }
    auto xi = x.impl();
    return make_result<T>({x.extent(0), x.extent(1), oh, ow}, std::move(out), OpKind::AvgPool2d, {xi},
                          [xi, planes, h, w, oh, ow, window, inv](const TensorImpl<T>& o) {
                              auto g = xi->grad_sink();
                              for (std::size_t p = 0; p < planes; ++p)
                                  for (std::size_t oy = 0; oy < oh; ++oy)
                                      for (std::size_t ox = 0; ox < ow; ++ox) {
                                          const T gv = o.grad[(p * oh + oy) * ow + ox] * inv;
                                          for (std::size_t dy = 0; dy < window; ++dy)
                                              for (std::size_t dx = 0; dx < window; ++dx)
                                                  g[(p * h + oy * window + dy) * w + ox * window + dx] += gv;
                                      }
                          });
}

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
    require_rank(x, 4, "global_avg_pool");
    const std::size_t planes = x.extent(0) * x.extent(1), plane = x.extent(2) * x.extent(3);
    const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
    std::vector<T> out(planes);
    const auto in = x.data();
    for (std::size_t p = 0; p < planes; ++p) {
        T acc{0};
        for (std::size_t i = 0; i < plane; ++i) acc += in[p * plane + i];
        out[p] = acc * inv;
    }
    auto xi = x.impl();
    return make_result<T>({x.extent(0), x.extent(1)}, std::move(out), OpKind::GlobalAvgPool, {xi},
                          [xi, planes, plane, inv](const TensorImpl<T>& o) {
                              auto g = xi->grad_sink();
                              for (std::size_t p = 0; p < planes; ++p) {
                                  const T gv = o.grad[p] * inv;
                                  for (std::size_t i = 0; i < plane; ++i) g[p * plane + i] += gv;
                              }
                          });
}

template <class T>
BasicTensor<T> slice_columns(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
    require_rank(x, 2, "slice_columns");
    const std::size_t rows = x.extent(0), cols = x.extent(1);
    if (begin >= end || end > cols) throw ShapeError("slice_columns: invalid column range");
    const std::size_t width = end - begin;
    std::vector<T> out(rows * width);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(r * cols + begin), width, out.begin() + static_cast<std::ptrdiff_t>(r * width));
    auto xi = x.impl();
    return make_result<T>({rows, width}, std::move(out), OpKind::SliceColumns, {xi},
                          [xi, rows, cols, begin, width](const TensorImpl<T>& o) {
                              auto g = xi->grad_sink();
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t c = 0; c < width; ++c) g[r * cols + begin + c] += o.grad[r * width + c];
                          });
}

template <class T>
BasicTensor<T> concat_columns(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "concat_columns");
    require_rank(b, 2, "concat_columns");
    if (a.extent(0) != b.extent(0)) throw ShapeError("concat_columns: row counts differ");
    const std::size_t rows = a.extent(0), ca = a.extent(1), cb = b.extent(1), cols = ca + cb;
    std::vector<T> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out[r * cols + c] = a.data()[r * ca + c];
        for (std::size_t c = 0; c < cb; ++c) out[r * cols + ca + c] = b.data()[r * cb + c];
    }
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>({rows, cols}, std::move(out), OpKind::ConcatColumns, {ai, bi},
                          [ai, bi, rows, ca, cb, cols](const TensorImpl<T>& o) {
                              auto ga = ai->grad_sink();
                              auto gb = bi->grad_sink();
                              for (std::size_t r = 0; r < rows; ++r) {
                                  if (!ga.empty())
                                      for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += o.grad[r * cols + c];
                                  if (!gb.empty())
                                      for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += o.grad[r * cols + ca + c];
                              }
                          });
}

template <class T>
BasicTensor<T> pick(const BasicTensor<T>& x, const std::vector<std::size_t>& index) {
    require_rank(x, 2, "pick");
    const std::size_t rows = x.extent(0), cols = x.extent(1);
    if (index.size() != rows) throw ShapeError("pick: index count differs from row count");
    std::vector<T> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        if (index[r] >= cols) throw ShapeError("pick: index " + std::to_string(index[r]) + " out of range");
        out[r] = x.data()[r * cols + index[r]];
    }
    auto xi = x.impl();
    return make_result<T>({rows}, std::move(out), OpKind::Pick, {xi}, [xi, index, cols](const TensorImpl<T>& o) {
        auto g = xi->grad_sink();
        for (std::size_t r = 0; r < index.size(); ++r) g[r * cols + index[r]] += o.grad[r];
    });
}

template <class T>
BasicTensor<T> row_cosine(const BasicTensor<T>& a, const BasicTensor<T>& b, T eps) {
    require_rank(a, 2, "row_cosine");
    require_same_shape(a, b, "row_cosine");
    const std::size_t rows = a.extent(0), cols = a.extent(1);
    // Per row: dot, |a|, |b|, denominator.
    std::vector<T> dot(rows), na(rows), nb(rows), out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double d = 0, sa = 0, sb = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double av = a.data()[r * cols + c], bv = b.data()[r * cols + c];
            d += av * bv;
            sa += av * av;
            sb += bv * bv;
        }
        dot[r] = static_cast<T>(d);
        na[r] = static_cast<T>(std::sqrt(sa));
        nb[r] = static_cast<T>(std::sqrt(sb));
        out[r] = static_cast<T>(d / (std::sqrt(sa) * std::sqrt(sb) + eps));
    }
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>({rows}, std::move(out), OpKind::RowCosine, {ai, bi},
                          [ai, bi, rows, cols, eps, dot, na, nb](const TensorImpl<T>& o) {
                              auto ga = ai->grad_sink();
                              auto gb = bi->grad_sink();
                              for (std::size_t r = 0; r < rows; ++r) {
                                  const T den = na[r] * nb[r] + eps;
                                  const T g = o.grad[r];
                                  // d/da = b/den - dot * |b| * a / (|a| den^2); the a/|a| term is
                                  // taken as zero when |a| == 0.
                                  const T ka = na[r] > T{0} ? dot[r] * nb[r] / (na[r] * den * den) : T{0};
                                  const T kb = nb[r] > T{0} ? dot[r] * na[r] / (nb[r] * den * den) : T{0};
                                  for (std::size_t c = 0; c < cols; ++c) {
                                      const T av = ai->data[r * cols + c], bv = bi->data[r * cols + c];
                                      if (!ga.empty()) ga[r * cols + c] += g * (bv / den - ka * av);
                                      if (!gb.empty()) gb[r * cols + c] += g * (av / den - kb * bv);
                                  }
                              }
                          });
}

template <class T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& x) {
    require_rank(x, 2, "argmax_rows");
    const std::size_t rows = x.extent(0), cols = x.extent(1);
    std::vector<std::size_t> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = x.data().subspan(r * cols, cols);
        out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

#define SHEDD_INSTANTIATE_OPS(T)                                                                             \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> transpose(const BasicTensor<T>&);                                                \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, std::size_t);  \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> div(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                 \
    template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                            \
    template BasicTensor<T> log(const BasicTensor<T>&);                                                      \
    template BasicTensor<T> exp(const BasicTensor<T>&);                                                      \
    template BasicTensor<T> sqrt(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> sum(const BasicTensor<T>&, std::optional<std::size_t>);                          \
    template BasicTensor<T> mean(const BasicTensor<T>&, std::optional<std::size_t>);                         \
    template MaxResult<T> max(const BasicTensor<T>&, std::optional<std::size_t>);                            \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                                  \
    template BasicTensor<T> add_row_bias(const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> add_channel_bias(const BasicTensor<T>&, const BasicTensor<T>&);                  \
    template BasicTensor<T> avg_pool2d(const BasicTensor<T>&, std::size_t);                                  \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                          \
    template BasicTensor<T> slice_columns(const BasicTensor<T>&, std::size_t, std::size_t);                  \
    template BasicTensor<T> concat_columns(const BasicTensor<T>&, const BasicTensor<T>&);                    \
    template BasicTensor<T> pick(const BasicTensor<T>&, const std::vector<std::size_t>&);                    \
    template BasicTensor<T> row_cosine(const BasicTensor<T>&, const BasicTensor<T>&, T);                     \
    template std::vector<std::size_t> argmax_rows(const BasicTensor<T>&);

SHEDD_INSTANTIATE_OPS(float)
SHEDD_INSTANTIATE_OPS(double)
#undef SHEDD_INSTANTIATE_OPS

}  // namespace shedd
