#include <algorithm>
#include <cmath>

#include "mlwb/explain/explain.hpp"
#include "mlwb/tensor/rng.hpp"
#include "mlwb/train/forward.hpp"

namespace mlwb {

namespace {

bool non_decreasing_tail(const std::vector<double>& trace, double tol) {
    const std::size_t steps = trace.size() - 1;
    const std::size_t tail = std::max<std::size_t>(1, (steps + 9) / 10);
    for (std::size_t i = trace.size() - tail; i < trace.size(); ++i) {
        if (trace[i] < trace[i - 1] - tol) {
            return false;
        }
    }
    return true;
}

}  // namespace

FeatureMapResult feature_map(const CompiledModel& model, std::size_t layer, std::size_t unit,
                             const FeatureMapOptions& options) {
    if (layer >= model.layers.size()) {
        throw ContractError("layer " + std::to_string(layer) + " does not exist (model has " +
                            std::to_string(model.layers.size()) + " layers)");
    }
    const Shape& out = model.layers[layer].shapes.output;
    if (unit >= out.back()) {
        throw ContractError("unit " + std::to_string(unit) + " is outside layer " + std::to_string(layer) +
                            " output " + to_string(out));
    }
    if (options.steps < 1) {
        throw ConfigError("steps must be at least 1");
    }
    if (!(options.step_size >= 0.0) || !std::isfinite(options.step_size)) {
        throw ConfigError("step_size must be a finite non-negative number");
    }
    std::optional<std::pair<float, float>> bounds = options.bounds;
    if (!bounds && std::holds_alternative<ImageInput>(model.spec.input)) {
        bounds = std::pair{0.0f, 1.0f};
    }

    const Shape sample = model.input_shape();
    Shape batched{1};
    batched.insert(batched.end(), sample.begin(), sample.end());
    auto x = Tensor64::zeros(batched);
    SplitMix64 rng(options.seed);
    for (double& v : x.data()) {
        v = static_cast<double>(static_cast<float>(rng.uniform(0.45, 0.55)));
    }

    auto fg = build_forward(model, x);
    auto& g = fg.graph;
    const Var objective = g.mean(g.take_last(fg.layer_outputs[layer], unit));
    const std::vector<Var> wrt{fg.input};

    FeatureMapResult result;
    result.layer = layer;
    result.unit = unit;
    result.trace.push_back(g.value(objective).item());
    for (std::int64_t step = 0; step < options.steps; ++step) {
        const Tensor64 grad = g.gradient(objective, wrt)[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
            double v = x[i] + options.step_size * grad[i];
            if (bounds) {
                v = std::clamp(v, static_cast<double>(bounds->first), static_cast<double>(bounds->second));
            }
            x[i] = v;
        }
        g.set_leaf(fg.input, x);
        g.evaluate();
        result.trace.push_back(g.value(objective).item());
    }
    result.input = x.cast<float>().reshaped(sample);
    result.converged = result.trace.back() >= result.trace.front() && non_decreasing_tail(result.trace, 1e-6);
    return result;
}

}  // namespace mlwb
