#include <algorithm>
#include <cmath>

#include "mlwb/explain/explain.hpp"
#include "mlwb/train/forward.hpp"

namespace mlwb {

std::size_t last_conv_layer(const ModelSpec& spec) {
    for (std::size_t i = spec.layers.size(); i-- > 0;) {
        if (spec.layers[i].kind() == LayerKind::conv2d) {
            return i;
        }
    }
    throw ContractError("GradCAM needs a conv2d layer and the model has none");
}

Tensor resize_bilinear(const Tensor& map, std::size_t height, std::size_t width) {
    if (map.rank() != 2) {
        throw ShapeError("resize_bilinear expects [h, w], got " + to_string(map.shape()));
    }
    const std::size_t h = map.dim(0);
    const std::size_t w = map.dim(1);
    auto out = Tensor::zeros({height, width});
    const double sy = static_cast<double>(h) / static_cast<double>(height);
    const double sx = static_cast<double>(w) / static_cast<double>(width);
    auto source = [](double pos, std::size_t n, std::size_t& lo, std::size_t& hi, double& frac) {
        const double p = std::clamp(pos, 0.0, static_cast<double>(n - 1));
        lo = static_cast<std::size_t>(std::floor(p));
        hi = std::min(lo + 1, n - 1);
        frac = p - static_cast<double>(lo);
    };
    for (std::size_t i = 0; i < height; ++i) {
        std::size_t y0, y1;
        double fy;
        source((static_cast<double>(i) + 0.5) * sy - 0.5, h, y0, y1, fy);
        for (std::size_t j = 0; j < width; ++j) {
            std::size_t x0, x1;
            double fx;
            source((static_cast<double>(j) + 0.5) * sx - 0.5, w, x0, x1, fx);
            const double top = (1.0 - fx) * map[y0 * w + x0] + fx * map[y0 * w + x1];
            const double bottom = (1.0 - fx) * map[y1 * w + x0] + fx * map[y1 * w + x1];
            out[i * width + j] = static_cast<float>((1.0 - fy) * top + fy * bottom);
        }
    }
    return out;
}

Tensor normalize_unit_range(const Tensor& t) {
    const auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
    const double min = *lo;
    const double range = static_cast<double>(*hi) - min;
    auto out = Tensor::zeros(t.shape());
    if (!(range > 0.0)) {
        return out;
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        out[i] = static_cast<float>(std::clamp((t[i] - min) / range, 0.0, 1.0));
    }
    return out;
}

Heatmap gradcam(const CompiledModel& model, const Tensor& input, std::size_t class_index,
                std::optional<std::size_t> conv_layer) {
    const std::size_t conv = conv_layer ? *conv_layer : last_conv_layer(model.spec);
    if (conv >= model.layers.size() || model.layers[conv].spec.kind() != LayerKind::conv2d) {
        throw ContractError("layer " + std::to_string(conv) + " is not a conv2d layer");
    }
    const Tensor batch = as_batch(model, input);
    if (batch.dim(0) != 1) {
        throw ContractError("GradCAM takes a single sample, got a batch of " + std::to_string(batch.dim(0)));
    }
    const Shape out = model.output_shape();
    if (class_index >= out.back()) {
        throw ContractError("class " + std::to_string(class_index) + " is outside the model output " + to_string(out));
    }

    auto fg = build_forward(model, batch.cast<double>());
    auto& g = fg.graph;
    const Var logits = fg.pre_activations.back().value_or(fg.output);
    const Var score = g.sum(g.take_last(logits, class_index));
    const Var activation = fg.layer_outputs[conv];
    const std::vector<Var> wrt{activation};
    const Tensor64 grad = g.gradient(score, wrt)[0];
    const Tensor64& a = g.value(activation);

    const std::size_t h = a.dim(1);
    const std::size_t w = a.dim(2);
    const std::size_t c = a.dim(3);
    std::vector<double> weights(c, 0.0);
    for (std::size_t p = 0; p < h * w; ++p) {
        for (std::size_t k = 0; k < c; ++k) {
            weights[k] += grad[p * c + k];
        }
    }
    for (double& wk : weights) {
        wk /= static_cast<double>(h * w);
    }
    auto cam = Tensor::zeros({h, w});
    for (std::size_t p = 0; p < h * w; ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            s += weights[k] * a[p * c + k];
        }
        cam[p] = static_cast<float>(std::max(s, 0.0));
    }

    const Shape in = model.input_shape();
    Heatmap heat;
    heat.input_shape = in;
    heat.class_index = class_index;
    heat.conv_layer = conv;
    const Tensor sized = in.size() == 3 ? resize_bilinear(cam, in[0], in[1]) : cam;
    heat.values = normalize_unit_range(sized);
    return heat;
}

}  // namespace mlwb
