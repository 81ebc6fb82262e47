#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "shedd/errors.hpp"
#include "shedd/ops.hpp"
#include "shedd/tensor.hpp"

using namespace shedd;

TEST_CASE("constructors fill shape and values") {
    const auto z = Tensor::zeros({2, 3});
    CHECK(z.shape() == Shape{2, 3});
    CHECK(z.numel() == 6);
    for (float v : z.data()) CHECK(v == 0.0f);

    const auto c = Tensor::constant({4}, 2.5f);
    for (float v : c.data()) CHECK(v == 2.5f);

    CHECK(Tensor::scalar(3.0f).item() == 3.0f);
}

TEST_CASE("zero extents and mismatched data are shape errors") {
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("uniform is reproducible and stays in range") {
    const auto a = Tensor::uniform({1000}, -2.0f, 3.0f, 42);
    const auto b = Tensor::uniform({1000}, -2.0f, 3.0f, 42);
    const auto c = Tensor::uniform({1000}, -2.0f, 3.0f, 43);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
    for (float v : a.data()) {
        CHECK(v >= -2.0f);
        CHECK(v < 3.0f);
    }
    CHECK_THROWS_AS(Tensor::uniform({3}, 1.0f, 1.0f, 0), ShapeError);
}

TEST_CASE("kaiming bound follows fan-in") {
    const auto w = Tensor::kaiming({64, 50}, 50, 7);
    const float bound = std::sqrt(6.0f / 50.0f);
    float largest = 0;
    for (float v : w.data()) largest = std::max(largest, std::abs(v));
    CHECK(largest <= bound);
    CHECK(largest > 0.9f * bound);
}

TEST_CASE("item requires a single element") {
    CHECK_THROWS_AS(Tensor::zeros({2}).item(), ContractError);
}

TEST_CASE("backward needs a scalar root") {
    auto x = Tensor::constant({3}, 1.0f).set_requires_grad(true);
    CHECK_THROWS_AS(scale(x, 2.0f).backward(), ContractError);
}

TEST_CASE("gradients accumulate across backward calls until cleared") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f});
    x.set_requires_grad(true);
    sum(scale(x, 3.0f)).backward();
    CHECK(x.grad() == std::vector<float>{3.0f, 3.0f});
    sum(scale(x, 3.0f)).backward();
    CHECK(x.grad() == std::vector<float>{6.0f, 6.0f});
    x.zero_grad();
    CHECK_FALSE(x.has_grad());
    CHECK(x.grad() == std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("a tensor used twice receives both contributions") {
    auto x = Tensor::from_data({1}, {3.0f});
    x.set_requires_grad(true);
    mul(x, x).backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("non-tracking inputs never get a gradient buffer") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f});
    auto w = Tensor::from_data({2}, {0.5f, 0.5f});
    w.set_requires_grad(true);
    sum(mul(x, w)).backward();
    CHECK_FALSE(x.has_grad());
    CHECK(w.has_grad());
}

TEST_CASE("no-grad guard suppresses graph construction") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f});
    x.set_requires_grad(true);
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        const auto y = scale(x, 2.0f);
        CHECK(y.op_kind() == OpKind::Leaf);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(scale(x, 2.0f).op_kind() == OpKind::Scale);
}

TEST_CASE("detach and clone drop graph links") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f});
    x.set_requires_grad(true);
    const auto y = scale(x, 2.0f);
    const auto d = y.detach();
    CHECK(d.op_kind() == OpKind::Leaf);
    CHECK_FALSE(d.requires_grad());
    CHECK(d.values() == y.values());

    auto c = x.clone();
    c.mutable_data()[0] = 9.0f;
    CHECK(x.at(0) == 1.0f);
    CHECK(c.requires_grad());
}

TEST_CASE("copies share storage") {
    auto a = Tensor::zeros({2});
    auto b = a;
    b.mutable_data()[1] = 5.0f;
    CHECK(a.at(1) == 5.0f);
}

TEST_CASE("tensor_cast converts element type") {
    const auto a = Tensor::from_data({2}, {0.25f, -1.5f});
    const auto d = tensor_cast<double>(a);
    CHECK(d.at(0) == 0.25);
    CHECK(d.at(1) == -1.5);
}

TEST_CASE("deep chains do not overflow the stack") {
    auto x = Tensor::scalar(1.0f).set_requires_grad(true);
    Tensor y = x;
    for (int i = 0; i < 20000; ++i) y = add_scalar(y, 0.0f);
    y.backward();
    CHECK(x.grad()[0] == 1.0f);
}
