#pragma once

#include <functional>
#include <span>

#include "shedd/tensor.hpp"

namespace shedd {

/// Central-difference gradient of a scalar function:
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element i. `x` is left
/// unchanged on return.
template <class T>
BasicTensor<T> finite_diff_grad(const std::function<double(const BasicTensor<T>&)>& f, const BasicTensor<T>& x,
                                double step);

/// Largest element-wise |a - b| / max(|a|, |b|, 1).
double max_gradient_error(std::span<const double> analytic, std::span<const double> numeric);

extern template BasicTensor<float> finite_diff_grad(const std::function<double(const BasicTensor<float>&)>&,
                                                    const BasicTensor<float>&, double);
extern template BasicTensor<double> finite_diff_grad(const std::function<double(const BasicTensor<double>&)>&,
                                                     const BasicTensor<double>&, double);

}  // namespace shedd
