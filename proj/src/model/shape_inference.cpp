#include "mlwb/model/shape_inference.hpp"

#include <string>

namespace mlwb {

namespace {

std::size_t positive(std::int64_t v, const char* what) {
    if (v < 1) {
        throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(v));
    }
    return static_cast<std::size_t>(v);
}

void require_rank(const Shape& input, std::size_t rank, LayerKind kind) {
    if (input.size() != rank) {
        throw ShapeError(std::string(to_string(kind)) + " expects a rank-" + std::to_string(rank) + " input, got " +
                         to_string(input));
    }
}

Shape window_output(const Shape& input, std::size_t kh, std::size_t kw, std::size_t stride, Padding padding,
                    std::size_t channels) {
    return {window_output_size(input[0], kh, stride, padding), window_output_size(input[1], kw, stride, padding),
            channels};
}

}  // namespace

Shape layer_output_shape(const LayerSpec& layer, const Shape& input) {
    switch (layer.kind()) {
        case LayerKind::dense: {
            const auto& p = layer.as<DenseParams>();
            require_rank(input, 1, LayerKind::dense);
            return {positive(p.units, "units")};
        }
        case LayerKind::conv2d: {
            const auto& p = layer.as<Conv2dParams>();
            require_rank(input, 3, LayerKind::conv2d);
            return window_output(input, positive(p.kernel_size[0], "kernel height"),
                                 positive(p.kernel_size[1], "kernel width"), positive(p.stride, "stride"), p.padding,
                                 positive(p.filters, "filters"));
        }
        case LayerKind::max_pool2d: {
            const auto& p = layer.as<MaxPool2dParams>();
            require_rank(input, 3, LayerKind::max_pool2d);
            return window_output(input, positive(p.pool_size[0], "pool height"), positive(p.pool_size[1], "pool width"),
                                 positive(p.stride, "stride"), p.padding, input[2]);
        }
        case LayerKind::flatten:
            return {element_count(input)};
        case LayerKind::reshape: {
            const auto& p = layer.as<ReshapeParams>();
            if (p.target_shape.empty()) {
                throw ConfigError("reshape target shape is empty");
            }
            Shape out;
            for (std::int64_t d : p.target_shape) {
                out.push_back(positive(d, "reshape dimension"));
            }
            if (element_count(out) != element_count(input)) {
                throw ShapeError("cannot reshape " + to_string(input) + " (" + std::to_string(element_count(input)) +
                                 " elements) to " + to_string(out));
            }
            return out;
        }
        case LayerKind::dropout:
        case LayerKind::activation:
        case LayerKind::batch_norm:
        case LayerKind::gaussian_noise:
            return input;
    }
    return input;
}

std::vector<Shape> weight_shapes(const LayerSpec& layer, const Shape& input) {
    const Shape out = layer_output_shape(layer, input);
    switch (layer.kind()) {
        case LayerKind::dense: {
            const auto& p = layer.as<DenseParams>();
            std::vector<Shape> w{{input[0], out[0]}};
            if (p.use_bias) {
                w.push_back({out[0]});
            }
            return w;
        }
        case LayerKind::conv2d: {
            const auto& p = layer.as<Conv2dParams>();
            const std::size_t f = out[2];
            std::vector<Shape> w{{static_cast<std::size_t>(p.kernel_size[0]), static_cast<std::size_t>(p.kernel_size[1]),
                                  input[2], f}};
            if (p.use_bias) {
                w.push_back({f});
            }
            return w;
        }
        case LayerKind::batch_norm: {
            const Shape c{input.back()};
            return {c, c, c, c};
        }
        default:
            return {};
    }
}

std::vector<std::string> weight_names(const LayerSpec& layer) {
    switch (layer.kind()) {
        case LayerKind::dense:
            return layer.as<DenseParams>().use_bias ? std::vector<std::string>{"kernel", "bias"}
                                                    : std::vector<std::string>{"kernel"};
        case LayerKind::conv2d:
            return layer.as<Conv2dParams>().use_bias ? std::vector<std::string>{"kernel", "bias"}
                                                     : std::vector<std::string>{"kernel"};
        case LayerKind::batch_norm:
            return {"gamma", "beta", "moving_mean", "moving_variance"};
        default:
            return {};
    }
}

ShapeTrace trace_shapes(const ModelSpec& spec) {
    ShapeTrace trace;
    Shape current;
    try {
        current = input_shape(spec.input);
    } catch (const Error& e) {
        trace.message = std::string("input: ") + e.what();
        return trace;
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        try {
            Shape next = layer_output_shape(spec.layers[i], current);
            trace.layers.push_back({current, next});
            current = std::move(next);
        } catch (const Error& e) {
            trace.failed_layer = i;
            trace.message = e.what();
            return trace;
        }
    }
    return trace;
}

std::vector<LayerShapes> infer_shapes(const ModelSpec& spec) {
    ShapeTrace trace = trace_shapes(spec);
    if (trace.failed_layer) {
        throw LayerShapeError(*trace.failed_layer, std::string(to_string(spec.layers[*trace.failed_layer].kind())) +
                                                       ": " + trace.message);
    }
    if (!trace.message.empty()) {
        throw ShapeError(trace.message);
    }
    return std::move(trace.layers);
}

}  // namespace mlwb
