#pragma once

#include <random>

#include "mlwb/model/compiled.hpp"
#include "oracles/gradcam.hpp"

namespace testsupport {

/// Random single-conv classifier of at most 6x6 input. Relu is not combined
/// with pooling: relu zeros tie inside pool windows, where the max has no derivative.
inline oracle::TinyConvNet random_tiny_conv(std::mt19937_64& rng) {
    auto between = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
    oracle::TinyConvNet net;
    net.h = between(3, 6);
    net.w = between(3, 6);
    net.c = between(1, 3);
    net.kh = between(1, std::min<std::size_t>(3, net.h));
    net.kw = between(1, std::min<std::size_t>(3, net.w));
    net.f = between(1, 4);
    net.same = rng() % 2 == 0;
    const char* acts[] = {"linear", "relu", "tanh"};
    net.activation = acts[rng() % 3];
    const std::size_t oh = net.same ? net.h : net.h - net.kh + 1;
    const std::size_t ow = net.same ? net.w : net.w - net.kw + 1;
    net.pool = net.activation != "relu" && oh >= 2 && ow >= 2 && rng() % 2 == 0;
    net.classes = between(2, 4);
    const std::size_t flat = net.pool ? (oh / 2) * (ow / 2) * net.f : oh * ow * net.f;
    auto fill = [&](std::size_t n) {
        std::vector<double> v = oracle::random_vector(rng, n);
        for (double& e : v) {
            e = static_cast<double>(static_cast<float>(e));
        }
        return v;
    };
    net.kernel = fill(net.kh * net.kw * net.c * net.f);
    net.conv_bias = fill(net.f);
    net.dense_kernel = fill(flat * net.classes);
    net.dense_bias = fill(net.classes);
    return net;
}

inline mlwb::Tensor to_tensor(mlwb::Shape shape, const std::vector<double>& v) {
    return mlwb::Tensor(std::move(shape), std::vector<float>(v.begin(), v.end()));
}

inline mlwb::CompiledModel build_tiny_conv(const oracle::TinyConvNet& net) {
    using namespace mlwb;
    ModelSpec spec;
    spec.input = CustomInput{{static_cast<std::int64_t>(net.h), static_cast<std::int64_t>(net.w),
                              static_cast<std::int64_t>(net.c)}};
    LayerSpec conv = default_layer(LayerKind::conv2d);
    auto& cp = conv.as<Conv2dParams>();
    cp.filters = static_cast<std::int64_t>(net.f);
    cp.kernel_size = {static_cast<std::int64_t>(net.kh), static_cast<std::int64_t>(net.kw)};
    cp.padding = net.same ? Padding::same : Padding::valid;
    cp.activation = ActivationKind{parse_activation(net.activation)};
    spec.layers.push_back(conv);
    if (net.pool) {
        spec.layers.push_back(default_layer(LayerKind::max_pool2d));
    }
    spec.layers.push_back(default_layer(LayerKind::flatten));
    spec.layers.push_back(dense_layer(static_cast<std::int64_t>(net.classes), Activation::softmax));
    spec.loss = LossKind::categorical_crossentropy;
    assign_layer_ids(spec);

    std::vector<std::vector<Tensor>> weights(spec.layers.size());
    weights[0] = {to_tensor({net.kh, net.kw, net.c, net.f}, net.kernel), to_tensor({net.f}, net.conv_bias)};
    const std::size_t flat = net.dense_kernel.size() / net.classes;
    weights.back() = {to_tensor({flat, net.classes}, net.dense_kernel), to_tensor({net.classes}, net.dense_bias)};
    return compile_with_weights(spec, weights);
}

}  // namespace testsupport
