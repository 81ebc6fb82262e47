#include "shedd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace shedd {

template <class T>
BasicTensor<T> finite_diff_grad(const std::function<double(const BasicTensor<T>&)>& f, const BasicTensor<T>& x,
                                double step) {
    if (!(step > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
    auto probe = x.detach();
    auto values = probe.mutable_data();
    std::vector<T> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const T original = values[i];
        values[i] = static_cast<T>(original + step);
        const T hi = values[i];
        const double f_hi = f(probe);
        values[i] = static_cast<T>(original - step);
        const T lo = values[i];
        const double f_lo = f(probe);
        values[i] = original;
        // Divide by the step actually taken after rounding to T.
        grad[i] = static_cast<T>((f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo)));
    }
    return BasicTensor<T>::from_data(x.shape(), std::move(grad));
}

double max_gradient_error(std::span<const double> analytic, std::span<const double> numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size() && i < numeric.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), 1.0});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    if (analytic.size() != numeric.size()) return INFINITY;
    return worst;
}

template BasicTensor<float> finite_diff_grad(const std::function<double(const BasicTensor<float>&)>&,
                                             const BasicTensor<float>&, double);
template BasicTensor<double> finite_diff_grad(const std::function<double(const BasicTensor<double>&)>&,
                                              const BasicTensor<double>&, double);

}  // namespace shedd
