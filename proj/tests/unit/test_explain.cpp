#include <doctest.h>

#include <random>

#include "mlwb/explain/explain.hpp"
#include "mlwb/train/forward.hpp"
#include "mlwb/train/metrics.hpp"
#include "support/tiny_conv.hpp"

using namespace mlwb;

namespace {

CompiledModel linear_two_input() {
    ModelSpec spec;
    spec.input = ColumnsInput{2};
    spec.layers = {dense_layer(1, Activation::linear)};
    assign_layer_ids(spec);
    return compile_with_weights(spec, {{Tensor({2, 1}, {1.0f, -1.0f}), Tensor({1}, {0.0f})}});
}

std::vector<double> widen(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("feature map recovers the box-constrained optimum of a linear unit") {
    const CompiledModel m = linear_two_input();
    FeatureMapOptions opt;
    opt.bounds = std::pair{0.0f, 1.0f};
    const FeatureMapResult r = feature_map(m, 0, 0, opt);
    CHECK(r.input.shape() == Shape{2});
    CHECK(r.input[0] == doctest::Approx(1.0));
    CHECK(r.input[1] == doctest::Approx(0.0));
    CHECK(r.trace.size() == 101);
    CHECK(r.converged);
    CHECK(r.trace.back() >= r.trace.front());

    // grid brute force over the box agrees with the ascent result
    double best = -1e9;
    float bx = 0, by = 0;
    for (int i = 0; i <= 20; ++i) {
        for (int j = 0; j <= 20; ++j) {
            const float a = i / 20.0f, b = j / 20.0f;
            const double v = predict(m, Tensor({2}, {a, b}))[0];
            if (v > best) {
                best = v;
                bx = a;
                by = b;
            }
        }
    }
    CHECK(std::abs(r.input[0] - bx) < 0.05);
    CHECK(std::abs(r.input[1] - by) < 0.05);
}

TEST_CASE("feature map degenerate cases") {
    ModelSpec spec;
    spec.input = ColumnsInput{3};
    spec.layers = {dense_layer(2, Activation::relu)};
    spec.layers[0].as<DenseParams>().kernel_initializer = InitializerKind{Initializer::zeros};
    assign_layer_ids(spec);
    const CompiledModel zero = compile(spec, 0);
    const FeatureMapResult still = feature_map(zero, 0, 1, {.steps = 5});
    const FeatureMapResult start = feature_map(zero, 0, 1, {.steps = 5, .step_size = 0.0});
    CHECK(bit_equal(still.input, start.input));
    for (float v : start.input.values()) {
        CHECK(v >= 0.45f);
        CHECK(v <= 0.55f);
    }
    CHECK_THROWS_AS(feature_map(zero, 1, 0), ContractError);
    CHECK_THROWS_AS(feature_map(zero, 0, 2), ContractError);
    CHECK_THROWS_AS(feature_map(zero, 0, 0, {.steps = 0}), ConfigError);

    // step size 0 on a non-trivial model also returns the seeded start
    const CompiledModel m = compile(starter_model(), 3);
    const FeatureMapResult a = feature_map(m, 1, 2, {.steps = 3, .step_size = 0.0, .seed = 9});
    const FeatureMapResult b = feature_map(m, 1, 2, {.steps = 1, .step_size = 0.0, .seed = 9});
    CHECK(bit_equal(a.input, b.input));
}

TEST_CASE("feature map on an image model stays inside [0,1] and ascends") {
    ModelSpec spec;
    spec.input = ImageInput{6, 6, 1};
    LayerSpec conv = default_layer(LayerKind::conv2d);
    conv.as<Conv2dParams>().filters = 3;
    conv.as<Conv2dParams>().activation = ActivationKind{Activation::tanh};
    spec.layers = {conv};
    assign_layer_ids(spec);
    const CompiledModel m = compile(spec, 4);
    const FeatureMapResult r = feature_map(m, 0, 1, {.steps = 60, .step_size = 0.05});
    CHECK(r.input.shape() == Shape{6, 6, 1});
    for (float v : r.input.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK(r.trace.back() > r.trace.front());
}

TEST_CASE("bilinear resize and normalization helpers") {
    const Tensor same({2, 2}, {1, 2, 3, 4});
    CHECK(bit_equal(resize_bilinear(same, 2, 2), same));
    const Tensor up = resize_bilinear(Tensor({1, 2}, {0, 1}), 1, 4);
    CHECK(up[0] == doctest::Approx(0.0));
    CHECK(up[1] == doctest::Approx(0.25));
    CHECK(up[2] == doctest::Approx(0.75));
    CHECK(up[3] == doctest::Approx(1.0));
    const Tensor flat = normalize_unit_range(Tensor::filled({2, 3}, 7.0f));
    for (float v : flat.values()) {
        CHECK(v == 0.0f);
    }
    const Tensor n = normalize_unit_range(Tensor({3}, {-2, 0, 2}));
    CHECK(n[0] == 0.0f);
    CHECK(n[1] == 0.5f);
    CHECK(n[2] == 1.0f);
}

TEST_CASE("gradcam matches the finite-difference loop oracle") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const oracle::TinyConvNet net = testsupport::random_tiny_conv(rng);
        const CompiledModel m = testsupport::build_tiny_conv(net);
        const std::vector<double> x = oracle::random_vector(rng, net.h * net.w * net.c, 0.0, 1.0);
        std::vector<double> xf(x.begin(), x.end());
        for (double& v : xf) {
            v = static_cast<double>(static_cast<float>(v));
        }
        const std::size_t cls = rng() % net.classes;
        const Heatmap heat = gradcam(m, testsupport::to_tensor({net.h, net.w, net.c}, xf), cls);
        const std::vector<double> expected = oracle::gradcam(net, xf, cls);
        REQUIRE(heat.values.shape() == Shape{net.h, net.w});
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(std::abs(heat.values[i] - expected[i]) <= 1e-3);
            CHECK(heat.values[i] >= 0.0f);
            CHECK(heat.values[i] <= 1.0f);
        }
    }
}

TEST_CASE("gradcam contracts") {
    CHECK_THROWS_AS(gradcam(compile(starter_model(), 0), Tensor({2}, {0, 1}), 0), ContractError);

    std::mt19937_64 rng(5);
    oracle::TinyConvNet net = testsupport::random_tiny_conv(rng);
    const CompiledModel m = testsupport::build_tiny_conv(net);
    const Tensor x = testsupport::to_tensor({net.h, net.w, net.c}, oracle::random_vector(rng, net.h * net.w * net.c));
    CHECK_THROWS_AS(gradcam(m, x, net.classes), ContractError);
    CHECK_THROWS_AS(gradcam(m, x, 0, m.layers.size() - 1), ContractError);

    // positive scaling of the final logits leaves the normalized map unchanged
    std::vector<std::vector<Tensor>> weights;
    for (const auto& l : m.layers) {
        weights.push_back(l.weights);
    }
    for (auto& w : weights.back()) {
        for (float& v : w.data()) {
            v *= 4.0f;
        }
    }
    const CompiledModel scaled = compile_with_weights(m.spec, weights);
    const Heatmap a = gradcam(m, x, 1);
    const Heatmap b = gradcam(scaled, x, 1);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-5));
    }
}

TEST_CASE("gradcam of a uniform channel is the all-zero map") {
    // 1x1 conv with zero kernel and bias 1 gives a constant activation; the score
    // averages that channel, so the weighted map is constant.
    ModelSpec spec;
    spec.input = CustomInput{{3, 3, 1}};
    LayerSpec conv = default_layer(LayerKind::conv2d);
    conv.as<Conv2dParams>().filters = 1;
    conv.as<Conv2dParams>().kernel_size = {1, 1};
    conv.as<Conv2dParams>().activation = ActivationKind{Activation::linear};
    spec.layers = {conv, default_layer(LayerKind::flatten), dense_layer(2, Activation::softmax)};
    assign_layer_ids(spec);
    const CompiledModel m = compile_with_weights(
        spec, {{Tensor({1, 1, 1, 1}, {0.0f}), Tensor({1}, {1.0f})},
               {},
               {Tensor::filled({9, 2}, 1.0f / 9.0f), Tensor::zeros({2})}});
    const Heatmap h = gradcam(m, Tensor::filled({3, 3, 1}, 0.3f), 0);
    for (float v : h.values.values()) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("layer io chaining and consistency with predict") {
    std::mt19937_64 rng(6);
    const oracle::TinyConvNet net = testsupport::random_tiny_conv(rng);
    const CompiledModel m = testsupport::build_tiny_conv(net);
    const Tensor x = testsupport::to_tensor({net.h, net.w, net.c}, oracle::random_vector(rng, net.h * net.w * net.c));
    const LayerIO io = layer_io(m, x);
    REQUIRE(io.layers.size() == m.layers.size());
    CHECK(bit_equal(io.layers[0].input, x));
    for (std::size_t i = 0; i + 1 < io.layers.size(); ++i) {
        CHECK(bit_equal(io.layers[i].output, io.layers[i + 1].input));
    }
    CHECK(bit_equal(io.layers.back().output, predict(m, x)));
    REQUIRE(io.layers[0].kernels.has_value());
    CHECK(io.layers[0].kernels->shape() == Shape{net.kh, net.kw, net.c, net.f});
    CHECK_FALSE(io.layers.back().kernels.has_value());

    // a batched call keeps the batch axis
    const Tensor batch = x.reshaped({1, net.h, net.w, net.c});
    CHECK(layer_io(m, batch).layers.back().output.shape() == Shape{1, net.classes});

    ModelSpec flat;
    flat.input = CustomInput{{2, 3}};
    flat.layers = {default_layer(LayerKind::flatten)};
    assign_layer_ids(flat);
    const Tensor in({2, 3}, {1, 2, 3, 4, 5, 6});
    const LayerIO fio = layer_io(compile(flat, 0), in);
    CHECK(bit_equal(fio.layers[0].output, in.reshaped({6})));
    CHECK_THROWS_AS(layer_io(compile(flat, 0), Tensor({3, 2}, {1, 2, 3, 4, 5, 6})), ShapeError);
}

TEST_CASE("loss comparison") {
    const Tensor y({2, 2}, {1, 0, 0, 1});
    const LossComparison same = loss_comparison(y, y);
    CHECK(same.values.at("mse") == 0.0);
    CHECK(same.values.count("categorical_crossentropy") == 1);

    const Tensor p({2, 2}, {0.7f, 0.3f, 0.4f, 0.6f});
    const LossComparison c = loss_comparison(y, p);
    CHECK(c.values.at("mse") == loss_mse(y, p));
    CHECK(c.values.at("categorical_crossentropy") == loss_categorical_crossentropy(y, p));

    const Tensor soft({2, 2}, {0.5f, 0.5f, 0.1f, 0.9f});
    const LossComparison r = loss_comparison(soft, p);
    CHECK(r.values.count("categorical_crossentropy") == 0);
    CHECK(r.omitted.at("categorical_crossentropy").find("one-hot") != std::string::npos);
    CHECK(to_json(r)["values"].contains("mse"));
}
