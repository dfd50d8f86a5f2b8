#include "mlwb/train/forward.hpp"

#include <algorithm>

#include "mlwb/tensor/rng.hpp"

namespace mlwb {

namespace {

std::size_t to_size(std::int64_t v) { return static_cast<std::size_t>(v); }

Shape batched(std::size_t n, const Shape& sample) {
    Shape s{n};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double rate, std::uint64_t seed) {
    auto mask = BasicTensor<T>::zeros(shape);
    SplitMix64 g(seed);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask.data()) {
        m = g.uniform01() >= rate ? keep_scale : T{0};
    }
    return mask;
}

template <typename T>
BasicTensor<T> gaussian(const Shape& shape, double stddev, std::uint64_t seed) {
    auto noise = BasicTensor<T>::zeros(shape);
    SplitMix64 g(seed);
    for (auto& v : noise.data()) {
        v = static_cast<T>(stddev * g.normal());
    }
    return noise;
}

}  // namespace

template <typename T>
ForwardGraph<T> build_forward(const CompiledModel& model, const BasicTensor<T>& input, const ForwardOptions& options) {
    const Shape expected = model.input_shape();
    if (input.rank() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), input.shape().begin() + 1)) {
        throw ShapeError("model expects input " + to_string(batched(input.rank() > 0 ? input.dim(0) : 1, expected)) +
                         ", got " + to_string(input.shape()));
    }
    const std::size_t n = input.dim(0);

    ForwardGraph<T> fg;
    auto& g = fg.graph;
    fg.input = g.leaf(input);
    Var x = fg.input;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const CompiledLayer& layer = model.layers[i];
        std::vector<Var> w;
        for (const Tensor& t : layer.weights) {
            w.push_back(g.leaf(t.template cast<T>()));
        }
        fg.layer_inputs.push_back(x);
        std::optional<Var> pre;
        bool batch_stats = false;
        const std::uint64_t layer_seed = mix_seed(options.seed, i, layer.spec.id);
        switch (layer.spec.kind()) {
            case LayerKind::dense: {
                const auto& p = layer.spec.as<DenseParams>();
                x = g.matmul(x, w[0]);
                if (p.use_bias) {
                    x = g.add_bias(x, w[1]);
                }
                pre = x;
                x = g.activation(x, p.activation);
                break;
            }
            case LayerKind::conv2d: {
                const auto& p = layer.spec.as<Conv2dParams>();
                x = g.conv2d(x, w[0], to_size(p.stride), p.padding);
                if (p.use_bias) {
                    x = g.add_bias(x, w[1]);
                }
                pre = x;
                x = g.activation(x, p.activation);
                break;
            }
            case LayerKind::max_pool2d: {
                const auto& p = layer.spec.as<MaxPool2dParams>();
                x = g.max_pool2d(x, to_size(p.pool_size[0]), to_size(p.pool_size[1]), to_size(p.stride), p.padding);
                break;
            }
            case LayerKind::flatten:
            case LayerKind::reshape:
                x = g.reshape(x, batched(n, layer.shapes.output));
                break;
            case LayerKind::dropout: {
                const double rate = layer.spec.as<DropoutParams>().rate;
                if (options.training && rate > 0.0) {
                    x = g.mul_constant(x, dropout_mask<T>(g.value(x).shape(), rate, layer_seed));
                }
                break;
            }
            case LayerKind::activation:
                x = g.activation(x, layer.spec.as<ActivationParams>().activation);
                break;
            case LayerKind::batch_norm: {
                const auto& p = layer.spec.as<BatchNormParams>();
                batch_stats = options.training && p.trainable;
                if (batch_stats) {
                    x = g.batch_norm_train(x, w[0], w[1], p.epsilon);
                } else {
                    x = g.batch_norm_fixed(x, w[0], w[1], layer.weights[2].template cast<T>(),
                                           layer.weights[3].template cast<T>(), p.epsilon);
                }
                break;
            }
            case LayerKind::gaussian_noise: {
                const double stddev = layer.spec.as<GaussianNoiseParams>().stddev;
                if (options.training && stddev > 0.0) {
                    x = g.add_constant(x, gaussian<T>(g.value(x).shape(), stddev, layer_seed));
                }
                break;
            }
        }
        fg.weights.push_back(std::move(w));
        fg.pre_activations.push_back(pre);
        fg.batch_statistics.push_back(batch_stats);
        fg.layer_outputs.push_back(x);
    }
    fg.output = x;
    return fg;
}

template ForwardGraph<float> build_forward(const CompiledModel&, const Tensor&, const ForwardOptions&);
template ForwardGraph<double> build_forward(const CompiledModel&, const Tensor64&, const ForwardOptions&);

Tensor as_batch(const CompiledModel& model, const Tensor& input, bool* added) {
    const Shape expected = model.input_shape();
    if (added != nullptr) {
        *added = false;
    }
    if (input.shape() == expected) {
        if (added != nullptr) {
            *added = true;
        }
        return input.reshaped(batched(1, expected));
    }
    if (input.rank() == expected.size() + 1 && std::equal(expected.begin(), expected.end(), input.shape().begin() + 1)) {
        return input;
    }
    throw ShapeError("expected input shape " + to_string(expected) + " (optionally with a leading batch axis), got " +
                     to_string(input.shape()));
}

Tensor predict(const CompiledModel& model, const Tensor& input) {
    bool added = false;
    const Tensor batch = as_batch(model, input, &added);
    auto fg = build_forward(model, batch);
    Tensor out = fg.graph.value(fg.output);
    if (added) {
        Shape s(out.shape().begin() + 1, out.shape().end());
        out = out.reshaped(s.empty() ? Shape{1} : s);
    }
    return out;
}

}  // namespace mlwb
