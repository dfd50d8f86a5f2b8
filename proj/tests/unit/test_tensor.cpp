#include <cmath>
#include <random>

#include "doctest.h"
#include "mlwb/tensor/activation.hpp"
#include "mlwb/tensor/initializer.hpp"
#include "mlwb/tensor/ops.hpp"
#include "mlwb/tensor/rng.hpp"
#include "mlwb/tensor/tensor.hpp"
#include "oracles/naive.hpp"

using namespace mlwb;

namespace {

Tensor from(Shape s, const std::vector<double>& v) {
    return Tensor(std::move(s), std::vector<float>(v.begin(), v.end()));
}

std::vector<double> as_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("tensor invariants") {
    CHECK(Tensor().rank() == 0);
    CHECK(Tensor().size() == 1);
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 0}, {}), ShapeError);
    const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
    CHECK(bit_equal(t, t.cast<double>().cast<float>()));
}

TEST_CASE("matmul") {
    SUBCASE("identity") {
        const Tensor id({2, 2}, {1, 0, 0, 1});
        const Tensor m({2, 2}, {5, 7, 2, 3});
        CHECK(matmul(id, m) == m);
    }
    SUBCASE("shape rule") {
        CHECK(matmul(Tensor::zeros({2, 3}), Tensor::zeros({3, 4})).shape() == Shape{2, 4});
    }
    SUBCASE("mismatch names both shapes") {
        try {
            matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("[2, 3] x [2, 3]") != std::string::npos);
        }
    }
    SUBCASE("random 3x3 against triple loop") {
        std::mt19937_64 rng(7);
        for (int trial = 0; trial < 20; ++trial) {
            const auto a = oracle::random_vector(rng, 9);
            const auto b = oracle::random_vector(rng, 9);
            const Tensor ta = from({3, 3}, a), tb = from({3, 3}, b);
            const auto expect = oracle::matmul(as_double(ta), as_double(tb), 3, 3, 3);
            const Tensor got = matmul(ta, tb);
            for (std::size_t i = 0; i < 9; ++i) {
                CHECK(std::abs(got[i] - expect[i]) <= 1e-6);
            }
        }
    }
}

TEST_CASE("conv2d") {
    SUBCASE("1x1 identity kernel") {
        const Tensor x({2, 3, 1}, {1, 2, 3, 4, 5, 6});
        const Tensor k({1, 1, 1, 1}, {1});
        CHECK(conv2d(x, k, 1, Padding::valid) == x);
    }
    SUBCASE("all-ones summation") {
        const Tensor y = conv2d(Tensor::filled({3, 3, 1}, 1.0f), Tensor::filled({3, 3, 1, 1}, 1.0f), 1, Padding::valid);
        CHECK(y.shape() == Shape{1, 1, 1});
        CHECK(y[0] == 9.0f);
    }
    SUBCASE("random 5x5x1 with two 3x3 filters against nested loops") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 10; ++trial) {
            const Tensor x = from({5, 5, 1}, oracle::random_vector(rng, 25));
            const Tensor k = from({3, 3, 1, 2}, oracle::random_vector(rng, 18));
            for (bool same : {false, true}) {
                for (std::size_t stride : {1u, 2u}) {
                    std::size_t oh = 0, ow = 0;
                    const auto expect =
                        oracle::conv2d(as_double(x), 5, 5, 1, as_double(k), 3, 3, 2, stride, same, oh, ow);
                    const Tensor got = conv2d(x, k, stride, same ? Padding::same : Padding::valid);
                    REQUIRE(got.shape() == Shape{oh, ow, 2});
                    for (std::size_t i = 0; i < expect.size(); ++i) {
                        CHECK(std::abs(got[i] - expect[i]) <= 1e-5);
                    }
                }
            }
        }
    }
    SUBCASE("output size rules") {
        CHECK(conv2d(Tensor::zeros({7, 9, 2}), Tensor::zeros({3, 2, 2, 4}), 2, Padding::valid).shape() ==
              Shape{3, 4, 4});
        CHECK(conv2d(Tensor::zeros({7, 9, 2}), Tensor::zeros({3, 2, 2, 4}), 2, Padding::same).shape() ==
              Shape{4, 5, 4});
    }
    SUBCASE("kernel larger than input") {
        CHECK_THROWS_AS(conv2d(Tensor::zeros({2, 2, 1}), Tensor::zeros({3, 3, 1, 1}), 1, Padding::valid), ShapeError);
    }
}

TEST_CASE("max_pool2d") {
    const Tensor x({1, 2, 4, 1}, {1, 5, 2, 0, 3, 4, 8, 7});
    std::vector<std::size_t> argmax;
    const Tensor y = max_pool2d(x, 2, 2, 2, Padding::valid, &argmax);
    CHECK(y.shape() == Shape{1, 1, 2, 1});
    CHECK(y[0] == 5.0f);
    CHECK(y[1] == 8.0f);
    CHECK(argmax == std::vector<std::size_t>{1, 6});
}

TEST_CASE("activations") {
    const auto act = [](Activation a, std::vector<double> v) {
        return apply_activation(ActivationKind{a}, from({v.size()}, v));
    };
    CHECK(act(Activation::sigmoid, {0})[0] == doctest::Approx(0.5));
    const Tensor r = act(Activation::relu, {-2, 3});
    CHECK(r[0] == 0.0f);
    CHECK(r[1] == 3.0f);
    const Tensor s = act(Activation::softmax, {0, 0});
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));
    const Tensor e = apply_activation(ActivationKind{Activation::elu, 2.0}, from({1}, {-1}));
    CHECK(e[0] == doctest::Approx(2.0 * (std::exp(-1.0) - 1.0)));
    CHECK_THROWS_AS(parse_activation("swish"), ConfigError);
    CHECK(parse_activation("tanh") == Activation::tanh);
}

TEST_CASE("activation range properties") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + rng() % 4, cols = 1 + rng() % 6;
        const Tensor x = from({rows, cols}, oracle::random_vector(rng, rows * cols, -60.0, 60.0));
        const Tensor sm = apply_activation(ActivationKind{Activation::softmax}, x);
        for (std::size_t r = 0; r < rows; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                total += sm[r * cols + c];
            }
            CHECK(std::abs(total - 1.0) <= 1e-6);
        }
        const Tensor sg = apply_activation(ActivationKind{Activation::sigmoid}, x);
        const Tensor rl = apply_activation(ActivationKind{Activation::relu}, x);
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(sg[i] > 0.0f);
            CHECK(sg[i] < 1.0f);
            CHECK(rl[i] >= 0.0f);
        }
    }
}

TEST_CASE("output shape depends only on input shapes") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 1 + rng() % 5, k = 1 + rng() % 5, n = 1 + rng() % 5;
        const Shape a{m, k}, b{k, n};
        const auto s1 = matmul(Tensor::zeros(a), Tensor::zeros(b)).shape();
        const auto s2 = matmul(from(a, oracle::random_vector(rng, m * k)), from(b, oracle::random_vector(rng, k * n))).shape();
        CHECK(s1 == s2);
        CHECK(s1 == Shape{m, n});

        const std::size_t h = 3 + rng() % 5, w = 3 + rng() % 5, c = 1 + rng() % 3, f = 1 + rng() % 3;
        const std::size_t kh = 1 + rng() % 3, kw = 1 + rng() % 3, stride = 1 + rng() % 2;
        const Padding pad = rng() % 2 ? Padding::same : Padding::valid;
        const auto c1 = conv2d(Tensor::zeros({h, w, c}), Tensor::zeros({kh, kw, c, f}), stride, pad).shape();
        const auto c2 = conv2d(from({h, w, c}, oracle::random_vector(rng, h * w * c)),
                               from({kh, kw, c, f}, oracle::random_vector(rng, kh * kw * c * f)), stride, pad)
                            .shape();
        CHECK(c1 == c2);
        if (pad == Padding::valid) {
            CHECK(c1[0] == (h - kh) / stride + 1);
        } else {
            CHECK(c1[0] == (h + stride - 1) / stride);
        }
    }
}

TEST_CASE("initializers") {
    CHECK(initialize(InitializerKind{Initializer::zeros}, {2, 2}) == Tensor::zeros({2, 2}));
    InitializerKind constant{Initializer::constant};
    constant.value = 0.5;
    CHECK(initialize(constant, {3}) == Tensor::filled({3}, 0.5f));
    CHECK_THROWS_AS(initialize(InitializerKind{Initializer::constant}, {3}), ConfigError);

    InitializerKind glorot{Initializer::glorot_uniform};
    glorot.seed = 42;
    const Tensor a = initialize(glorot, {4, 4});
    const Tensor b = initialize(glorot, {4, 4});
    CHECK(bit_equal(a, b));
    const double limit = std::sqrt(6.0 / 8.0);
    for (float v : a.data()) {
        CHECK(std::abs(v) <= limit * (1 + 1e-7));
    }
    glorot.seed = 43;
    CHECK_FALSE(bit_equal(a, initialize(glorot, {4, 4})));

    InitializerKind normal{Initializer::random_normal};
    normal.seed = 1;
    normal.mean = 2.0;
    normal.stddev = 0.5;
    const Tensor big = initialize(normal, {4000});
    double mean = 0.0;
    for (float v : big.data()) {
        mean += v;
    }
    CHECK(mean / 4000.0 == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("splitmix64 reference values") {
    // Published SplitMix64 outputs for seed 1234567.
    SplitMix64 g(1234567);
    CHECK(g.next() == 6457827717110365317ULL);
    CHECK(g.next() == 3203168211198807973ULL);
    CHECK(g.next() == 9817491932198370423ULL);
}

TEST_CASE("seeded permutation") {
    const auto p = seeded_permutation(10, 9);
    CHECK(p == seeded_permutation(10, 9));
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(sorted[i] == i);
    }
}

TEST_CASE("loss kernels") {
    CHECK(mse_value(Tensor({2}, {0, 0}), Tensor({2}, {1, 1})) == 1.0f);
    CHECK(categorical_crossentropy_value(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0.5f, 0.5f})) ==
          doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(mse_value(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}
