#include "mlwb/explain/explain.hpp"
#include "mlwb/train/forward.hpp"
#include "mlwb/train/metrics.hpp"

namespace mlwb {

namespace {

Tensor strip_batch(const Tensor& t) {
    Shape s(t.shape().begin() + 1, t.shape().end());
    return t.reshaped(s.empty() ? Shape{1} : s);
}

}  // namespace

LayerIO layer_io(const CompiledModel& model, const Tensor& input) {
    bool added = false;
    const Tensor batch = as_batch(model, input, &added);
    const auto fg = build_forward(model, batch);
    auto value = [&](Var v) { return added ? strip_batch(fg.graph.value(v)) : fg.graph.value(v); };
    LayerIO io;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        LayerIOEntry e;
        e.index = i;
        e.kind = model.layers[i].spec.kind();
        e.input = value(fg.layer_inputs[i]);
        e.output = value(fg.layer_outputs[i]);
        if (e.kind == LayerKind::conv2d) {
            e.kernels = model.layers[i].weights[0];
        }
        io.layers.push_back(std::move(e));
    }
    return io;
}

LossComparison loss_comparison(const Tensor& y, const Tensor& y_hat) {
    LossComparison c;
    if (y.shape() != y_hat.shape()) {
        const std::string reason = "target shape " + to_string(y.shape()) + " differs from prediction shape " +
                                   to_string(y_hat.shape());
        c.omitted["mse"] = reason;
        c.omitted["categorical_crossentropy"] = reason;
        return c;
    }
    c.values["mse"] = loss_mse(y, y_hat);
    if (is_one_hot(y)) {
        c.values["categorical_crossentropy"] = loss_categorical_crossentropy(y, y_hat);
    } else {
        c.omitted["categorical_crossentropy"] = "targets are not one-hot";
    }
    return c;
}

nlohmann::json to_json(const LossComparison& c) {
    return {{"values", c.values}, {"omitted", c.omitted}};
}

}  // namespace mlwb
