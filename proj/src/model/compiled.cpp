#include "mlwb/model/compiled.hpp"

#include <map>
#include <string>

#include "mlwb/tensor/rng.hpp"

namespace mlwb {

namespace {

std::vector<Tensor> fresh_weights(const LayerSpec& layer, const Shape& input, std::uint64_t seed) {
    const std::vector<Shape> shapes = weight_shapes(layer, input);
    std::vector<Tensor> out;
    auto kernel_and_bias = [&](const InitializerKind& k, const InitializerKind& b) {
        out.push_back(initialize(k, shapes[0], mix_seed(seed, layer.id, 0)));
        if (shapes.size() > 1) {
            out.push_back(initialize(b, shapes[1], mix_seed(seed, layer.id, 1)));
        }
    };
    switch (layer.kind()) {
        case LayerKind::dense: {
            const auto& p = layer.as<DenseParams>();
            kernel_and_bias(p.kernel_initializer, p.bias_initializer);
            break;
        }
        case LayerKind::conv2d: {
            const auto& p = layer.as<Conv2dParams>();
            kernel_and_bias(p.kernel_initializer, p.bias_initializer);
            break;
        }
        case LayerKind::batch_norm:
            out.push_back(Tensor::filled(shapes[0], 1.0f));
            out.push_back(Tensor::zeros(shapes[1]));
            out.push_back(Tensor::zeros(shapes[2]));
            out.push_back(Tensor::filled(shapes[3], 1.0f));
            break;
        default:
            break;
    }
    return out;
}

void require_valid(const ModelSpec& spec) {
    ValidationReport report = validate(spec, OperationalMode::expert);
    if (report.has_errors()) {
        std::string first;
        for (const auto& f : report.findings) {
            if (f.severity == Severity::error) {
                first = (f.layer ? "layer " + std::to_string(*f.layer) + ": " : std::string()) + f.message;
                break;
            }
        }
        throw CompileError("model is invalid (" + std::to_string(report.error_count()) + " error(s)); first: " + first,
                           std::move(report));
    }
}

std::vector<Shape> shapes_of(const std::vector<Tensor>& weights) {
    std::vector<Shape> out;
    for (const auto& w : weights) {
        out.push_back(w.shape());
    }
    return out;
}

}  // namespace

Shape CompiledModel::input_shape() const { return mlwb::input_shape(spec.input); }

Shape CompiledModel::output_shape() const { return layers.empty() ? input_shape() : layers.back().shapes.output; }

std::size_t CompiledModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        for (const auto& w : l.weights) {
            n += w.size();
        }
    }
    return n;
}

CompiledModel compile(const ModelSpec& spec, std::uint64_t seed) {
    require_valid(spec);
    const auto shapes = infer_shapes(spec);
    CompiledModel m;
    m.spec = spec;
    m.seed = seed;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        m.layers.push_back({spec.layers[i], shapes[i], fresh_weights(spec.layers[i], shapes[i].input, seed)});
    }
    return m;
}

CompiledModel compile_with_weights(const ModelSpec& spec, const std::vector<std::vector<Tensor>>& weights,
                                   std::uint64_t seed) {
    require_valid(spec);
    const auto shapes = infer_shapes(spec);
    if (weights.size() != spec.layers.size()) {
        throw ShapeError("expected weights for " + std::to_string(spec.layers.size()) + " layers, got " +
                         std::to_string(weights.size()));
    }
    CompiledModel m;
    m.spec = spec;
    m.seed = seed;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto expected = weight_shapes(spec.layers[i], shapes[i].input);
        const auto given = shapes_of(weights[i]);
        if (expected != given) {
            std::string e, g;
            for (const auto& s : expected) {
                e += to_string(s);
            }
            for (const auto& s : given) {
                g += to_string(s);
            }
            throw LayerShapeError(i, "weight shapes " + (g.empty() ? std::string("(none)") : g) + " do not match " +
                                         (e.empty() ? std::string("(none)") : e));
        }
        m.layers.push_back({spec.layers[i], shapes[i], weights[i]});
    }
    return m;
}

RecompileResult recompile(const CompiledModel& old, const ModelSpec& spec, bool retain_weights) {
    require_valid(spec);
    const auto shapes = infer_shapes(spec);
    std::map<std::uint64_t, const CompiledLayer*> previous;
    for (const auto& l : old.layers) {
        previous[l.spec.id] = &l;
    }
    RecompileResult r;
    r.model.spec = spec;
    r.model.seed = old.seed;
    r.model.revision = old.revision + 1;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        const auto wanted = weight_shapes(layer, shapes[i].input);
        const auto it = previous.find(layer.id);
        const bool keep = retain_weights && it != previous.end() && it->second->spec.kind() == layer.kind() &&
                          shapes_of(it->second->weights) == wanted;
        if (keep) {
            r.model.layers.push_back({layer, shapes[i], it->second->weights});
        } else {
            r.model.layers.push_back({layer, shapes[i], fresh_weights(layer, shapes[i].input, old.seed)});
            if (!wanted.empty()) {
                r.reinitialized.push_back(i);
            }
        }
    }
    return r;
}

std::vector<std::size_t> reinitialized_layers(const ModelSpec& before, const ModelSpec& after) {
    const ShapeTrace a = trace_shapes(after);
    if (!a.ok()) {
        return {};
    }
    const ShapeTrace b = trace_shapes(before);
    std::map<std::uint64_t, std::pair<LayerKind, std::vector<Shape>>> previous;
    if (b.ok()) {
        for (std::size_t i = 0; i < before.layers.size(); ++i) {
            previous[before.layers[i].id] = {before.layers[i].kind(), weight_shapes(before.layers[i], b.layers[i].input)};
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < after.layers.size(); ++i) {
        const auto wanted = weight_shapes(after.layers[i], a.layers[i].input);
        if (wanted.empty()) {
            continue;
        }
        const auto it = previous.find(after.layers[i].id);
        if (it == previous.end() || it->second.first != after.layers[i].kind() || it->second.second != wanted) {
            out.push_back(i);
        }
    }
    return out;
}

}  // namespace mlwb
