#include "mlwb/model/validate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mlwb/model/compiled.hpp"
#include "mlwb/model/model_file.hpp"
#include "mlwb/model/shape_inference.hpp"

namespace mlwb {

using nlohmann::json;

namespace {

constexpr std::int64_t kMaxUnits = 65536;
constexpr int kMaxFixRounds = 64;

bool finite(double v) { return std::isfinite(v); }

class Checker {
public:
    explicit Checker(ValidationReport& report) : report_(report) {}

    void error(std::optional<std::size_t> layer, std::string field, std::string message,
               std::optional<EditPayload> fix) {
        add(layer, std::move(field), Severity::error, std::move(message), std::move(fix));
    }

    void warning(std::optional<std::size_t> layer, std::string field, std::string message,
                 std::optional<EditPayload> fix = std::nullopt) {
        add(layer, std::move(field), Severity::warning, std::move(message), std::move(fix));
    }

    std::size_t errors() const { return report_.error_count(); }

private:
    void add(std::optional<std::size_t> layer, std::string field, Severity sev, std::string message,
             std::optional<EditPayload> fix) {
        Finding f;
        f.layer = layer;
        f.field = std::move(field);
        f.severity = sev;
        f.message = std::move(message);
        if (fix) {
            f.fix = EditOp{std::move(*fix), std::nullopt};
        }
        report_.findings.push_back(std::move(f));
    }

    ValidationReport& report_;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

SetParam set(std::size_t index, const char* field, json value) { return SetParam{index, field, std::move(value)}; }

void check_count(Checker& c, std::size_t i, const char* field, std::int64_t v, std::int64_t hi = kMaxUnits) {
    if (v < 1) {
        c.error(i, field, std::string(field) + " must be at least 1, got " + std::to_string(v), set(i, field, 1));
    } else if (v > hi) {
        c.error(i, field, std::string(field) + " must be at most " + std::to_string(hi) + ", got " + std::to_string(v),
                set(i, field, hi));
    }
}

void check_pair(Checker& c, std::size_t i, const char* field, const std::array<std::int64_t, 2>& v) {
    if (v[0] < 1 || v[1] < 1) {
        c.error(i, field, std::string(field) + " entries must be at least 1",
                set(i, field, json::array({std::max<std::int64_t>(v[0], 1), std::max<std::int64_t>(v[1], 1)})));
    }
}

void check_activation(Checker& c, std::size_t i, const ActivationKind& a) {
    if (a.name == Activation::elu && !(finite(a.alpha) && a.alpha > 0.0)) {
        c.error(i, "activation", "elu alpha must be positive, got " + num(a.alpha),
                set(i, "activation", to_json(ActivationKind{Activation::elu, 1.0})));
    }
}

void check_initializer(Checker& c, std::size_t i, const char* field, const InitializerKind& k) {
    InitializerKind fixed = k;
    std::string problem;
    switch (k.name) {
        case Initializer::constant:
            if (!k.value || !finite(*k.value)) {
                problem = "constant initializer needs a finite value";
                fixed.value = 0.0;
            }
            break;
        case Initializer::random_normal:
            if ((k.stddev && !(finite(*k.stddev) && *k.stddev >= 0.0)) || (k.mean && !finite(*k.mean))) {
                problem = "random_normal needs a finite mean and a non-negative stddev";
                fixed.mean.reset();
                fixed.stddev.reset();
            }
            break;
        case Initializer::random_uniform: {
            const double lo = k.minval.value_or(-0.05), hi = k.maxval.value_or(0.05);
            if (!finite(lo) || !finite(hi) || lo > hi) {
                problem = "random_uniform needs finite bounds with minval <= maxval";
                fixed.minval.reset();
                fixed.maxval.reset();
            }
            break;
        }
        default:
            break;
    }
    if (!problem.empty()) {
        c.error(i, field, problem, set(i, field, to_json(fixed)));
    }
}

void check_regularizer(Checker& c, std::size_t i, const char* field, const Regularizer& r) {
    if (!(finite(r.lambda) && r.lambda >= 0.0)) {
        Regularizer fixed = r;
        fixed.lambda = 0.0;
        c.error(i, field, "regularization factor must be non-negative, got " + num(r.lambda),
                set(i, field, to_json(fixed)));
    }
}

template <typename P>
void check_trainable_block(Checker& c, std::size_t i, const P& p) {
    check_activation(c, i, p.activation);
    check_initializer(c, i, "kernel_initializer", p.kernel_initializer);
    check_initializer(c, i, "bias_initializer", p.bias_initializer);
    check_regularizer(c, i, "kernel_regularizer", p.kernel_regularizer);
    check_regularizer(c, i, "bias_regularizer", p.bias_regularizer);
}

// Range checks that do not depend on shapes.
void check_params(Checker& c, std::size_t i, const LayerSpec& layer) {
    switch (layer.kind()) {
        case LayerKind::dense: {
            const auto& p = layer.as<DenseParams>();
            check_count(c, i, "units", p.units);
            check_trainable_block(c, i, p);
            break;
        }
        case LayerKind::conv2d: {
            const auto& p = layer.as<Conv2dParams>();
            check_count(c, i, "filters", p.filters, 4096);
            check_pair(c, i, "kernel_size", p.kernel_size);
            check_count(c, i, "stride", p.stride, 1024);
            check_trainable_block(c, i, p);
            break;
        }
        case LayerKind::max_pool2d: {
            const auto& p = layer.as<MaxPool2dParams>();
            check_pair(c, i, "pool_size", p.pool_size);
            check_count(c, i, "stride", p.stride, 1024);
            break;
        }
        case LayerKind::reshape: {
            const auto& p = layer.as<ReshapeParams>();
            const bool bad = p.target_shape.empty() ||
                             std::any_of(p.target_shape.begin(), p.target_shape.end(), [](auto d) { return d < 1; });
            if (bad) {
                // Replaced by a conserving shape once the input shape is known.
                c.error(i, "target_shape", "reshape target must be a non-empty list of positive sizes",
                        set(i, "target_shape", json::array({1})));
            }
            break;
        }
        case LayerKind::dropout: {
            const double r = layer.as<DropoutParams>().rate;
            if (!(finite(r) && r >= 0.0 && r < 1.0)) {
                c.error(i, "rate", "dropout rate must be in [0, 1), got " + num(r), set(i, "rate", 0.5));
            }
            break;
        }
        case LayerKind::activation:
            check_activation(c, i, layer.as<ActivationParams>().activation);
            break;
        case LayerKind::batch_norm: {
            const auto& p = layer.as<BatchNormParams>();
            if (!(finite(p.momentum) && p.momentum >= 0.0 && p.momentum < 1.0)) {
                c.error(i, "momentum", "momentum must be in [0, 1), got " + num(p.momentum), set(i, "momentum", 0.99));
            }
            if (!(finite(p.epsilon) && p.epsilon > 0.0)) {
                c.error(i, "epsilon", "epsilon must be positive, got " + num(p.epsilon), set(i, "epsilon", 1e-3));
            }
            break;
        }
        case LayerKind::gaussian_noise: {
            const double s = layer.as<GaussianNoiseParams>().stddev;
            if (!(finite(s) && s >= 0.0)) {
                c.error(i, "stddev", "noise stddev must be non-negative, got " + num(s),
                        set(i, "stddev", std::isnan(s) ? 0.1 : 0.0));
            }
            break;
        }
        case LayerKind::flatten:
            break;
    }
}

LayerSpec reshape_to(Shape target) {
    ReshapeParams p;
    p.target_shape.assign(target.begin(), target.end());
    return LayerSpec{0, p};
}

// Finding for a shape failure of layer i on input `in`, with a structural fix.
void shape_finding(Checker& c, std::size_t i, const LayerSpec& layer, const Shape& in, const std::string& message) {
    const std::string text = std::string(to_string(layer.kind())) + ": " + message;
    switch (layer.kind()) {
        case LayerKind::dense:
            c.error(i, "input", text + " (a flatten layer is needed before it)",
                    AddLayer{i, LayerSpec{0, FlattenParams{}}});
            return;
        case LayerKind::conv2d:
        case LayerKind::max_pool2d: {
            if (in.size() == 1) {
                c.error(i, "input", text, AddLayer{i, reshape_to({1, 1, in[0]})});
            } else if (in.size() == 2) {
                c.error(i, "input", text, AddLayer{i, reshape_to({in[0], in[1], 1})});
            } else if (in.size() > 3) {
                c.error(i, "input", text, AddLayer{i, reshape_to({in[0], in[1], element_count(in) / (in[0] * in[1])})});
            } else {
                const bool conv = layer.kind() == LayerKind::conv2d;
                const auto w = conv ? layer.as<Conv2dParams>().kernel_size : layer.as<MaxPool2dParams>().pool_size;
                const std::int64_t h = std::min<std::int64_t>(w[0], static_cast<std::int64_t>(in[0]));
                const std::int64_t v = std::min<std::int64_t>(w[1], static_cast<std::int64_t>(in[1]));
                const char* field = conv ? "kernel_size" : "pool_size";
                c.error(i, field, text, set(i, field, json::array({h, v})));
            }
            return;
        }
        case LayerKind::reshape: {
            c.error(i, "target_shape", text, set(i, "target_shape", json::array({element_count(in)})));
            return;
        }
        default:
            c.error(i, "input", text, std::nullopt);
    }
}

void check_input(Checker& c, const InputDescriptor& input) {
    auto clamp = [](std::int64_t v) { return std::max<std::int64_t>(v, 1); };
    if (const auto* img = std::get_if<ImageInput>(&input)) {
        if (img->height < 1 || img->width < 1 || img->channels < 1) {
            c.error(std::nullopt, "input", "image height, width and channels must be positive",
                    SetInputDescriptor{ImageInput{clamp(img->height), clamp(img->width), clamp(img->channels)}});
        }
    } else if (const auto* cols = std::get_if<ColumnsInput>(&input)) {
        if (cols->count < 1) {
            c.error(std::nullopt, "input", "column count must be positive", SetInputDescriptor{ColumnsInput{1}});
        }
    } else {
        const auto& shape = std::get<CustomInput>(input).shape;
        if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](auto d) { return d < 1; })) {
            CustomInput fixed;
            fixed.shape.clear();
            for (auto d : shape) {
                fixed.shape.push_back(clamp(d));
            }
            if (fixed.shape.empty()) {
                fixed.shape.push_back(1);
            }
            c.error(std::nullopt, "input", "custom input shape must be a non-empty list of positive sizes",
                    SetInputDescriptor{fixed});
        }
    }
}

void check_optimizer(Checker& c, const OptimizerSpec& o) {
    const OptimizerSpec defaults;
    auto fix = [&](auto member) {
        OptimizerSpec f = o;
        f.*member = defaults.*member;
        return SetOptimizer{f};
    };
    if (!(finite(o.learning_rate) && o.learning_rate > 0.0)) {
        c.error(std::nullopt, "optimizer.learning_rate", "learning rate must be positive",
                fix(&OptimizerSpec::learning_rate));
    }
    if (o.kind == OptimizerKind::adam) {
        if (!(o.beta1 > 0.0 && o.beta1 < 1.0)) {
            c.error(std::nullopt, "optimizer.beta1", "beta1 must be in (0, 1)", fix(&OptimizerSpec::beta1));
        }
        if (!(o.beta2 > 0.0 && o.beta2 < 1.0)) {
            c.error(std::nullopt, "optimizer.beta2", "beta2 must be in (0, 1)", fix(&OptimizerSpec::beta2));
        }
        if (!(finite(o.epsilon) && o.epsilon > 0.0)) {
            c.error(std::nullopt, "optimizer.epsilon", "epsilon must be positive", fix(&OptimizerSpec::epsilon));
        }
    }
}

// Index of the layer whose activation produces the model output, skipping
// shape- and value-preserving regularization layers.
std::optional<std::size_t> output_activation_layer(const ModelSpec& spec) {
    for (std::size_t k = spec.layers.size(); k-- > 0;) {
        const LayerKind kind = spec.layers[k].kind();
        if (kind == LayerKind::dense || kind == LayerKind::conv2d || kind == LayerKind::activation) {
            return k;
        }
        if (kind != LayerKind::dropout && kind != LayerKind::gaussian_noise) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

ActivationKind activation_of(const LayerSpec& l) {
    switch (l.kind()) {
        case LayerKind::dense: return l.as<DenseParams>().activation;
        case LayerKind::conv2d: return l.as<Conv2dParams>().activation;
        case LayerKind::activation: return l.as<ActivationParams>().activation;
        default: return ActivationKind{};
    }
}

void check_output(Checker& c, const ModelSpec& spec, const Shape& out) {
    const auto k = output_activation_layer(spec);
    const bool softmax = k && activation_of(spec.layers[*k]).name == Activation::softmax;
    if (spec.loss == LossKind::categorical_crossentropy && !softmax) {
        std::optional<EditPayload> fix;
        if (k) {
            fix = set(*k, "activation", "softmax");
        }
        c.warning(k, "activation", "categorical_crossentropy expects a softmax output layer", fix);
    }
    if (softmax && out.back() == 1) {
        c.warning(k, "activation", "softmax over a single unit always outputs 1");
    }
}

void check_guided_advice(Checker& c, const ModelSpec& spec) {
    for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
        const auto& a = spec.layers[i];
        const auto& b = spec.layers[i + 1];
        if (a.kind() == LayerKind::dense && b.kind() == LayerKind::dense &&
            a.as<DenseParams>().activation.name == Activation::linear) {
            c.warning(i, "activation", "a linear dense layer followed by another dense layer adds no expressiveness",
                      set(i, "activation", "relu"));
        }
    }
}

}  // namespace

std::string_view to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

bool ValidationReport::has_errors() const noexcept { return error_count() > 0; }

std::size_t ValidationReport::error_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(),
                                                  [](const Finding& f) { return f.severity == Severity::error; }));
}

ValidationReport validate(const ModelSpec& spec, OperationalMode mode) {
    ValidationReport report;
    Checker c(report);
    check_input(c, spec.input);
    check_optimizer(c, spec.optimizer);
    if (spec.layers.empty()) {
        c.error(std::nullopt, "layers", "the model needs at least one layer", std::nullopt);
        return report;
    }
    bool shapes_known = true;
    Shape current;
    try {
        current = input_shape(spec.input);
    } catch (const Error&) {
        shapes_known = false;
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const std::size_t before = c.errors();
        check_params(c, i, spec.layers[i]);
        if (!shapes_known || c.errors() != before) {
            shapes_known = false;
            continue;
        }
        try {
            current = layer_output_shape(spec.layers[i], current);
        } catch (const Error& e) {
            shape_finding(c, i, spec.layers[i], current, e.what());
            shapes_known = false;
        }
    }
    if (shapes_known) {
        check_output(c, spec, current);
    }
    if (mode != OperationalMode::expert) {
        check_guided_advice(c, spec);
    }
    return report;
}

json to_json(const ValidationReport& report) {
    json findings = json::array();
    for (const auto& f : report.findings) {
        json j{{"layer", f.layer ? json(*f.layer) : json(nullptr)},
               {"field", f.field},
               {"severity", to_string(f.severity)},
               {"message", f.message}};
        if (f.fix) {
            j["fix"] = to_json(*f.fix);
        }
        findings.push_back(std::move(j));
    }
    return json{{"format_version", 1}, {"errors", report.error_count()}, {"findings", std::move(findings)}};
}

EditResult apply_edits(const ModelSpec& spec, const std::vector<EditOp>& edits, OperationalMode mode) {
    EditResult result;
    result.spec = spec;
    for (const auto& op : edits) {
        EditPayload inverse = apply_payload(result.spec, op.payload);
        result.applied.push_back(EditOp{op.payload, std::move(inverse)});
    }
    if (mode != OperationalMode::expert) {
        for (int round = 0;; ++round) {
            ValidationReport report = validate(result.spec, mode);
            if (!report.has_errors()) {
                break;
            }
            const auto it = std::find_if(report.findings.begin(), report.findings.end(),
                                         [](const Finding& f) { return f.severity == Severity::error; });
            if (!it->fix || round >= kMaxFixRounds) {
                const std::string why = it->fix ? "automatic fixes did not converge" : it->message;
                throw EditRejected("edit rejected: " + why, std::move(report));
            }
            try {
                EditPayload inverse = apply_payload(result.spec, it->fix->payload);
                result.applied.push_back(EditOp{it->fix->payload, std::move(inverse)});
            } catch (const Error& e) {
                throw EditRejected(std::string("edit rejected: automatic fix failed: ") + e.what(), std::move(report));
            }
        }
    }
    result.report = validate(result.spec, mode);
    result.reinitialized = reinitialized_layers(spec, result.spec);
    return result;
}

EditResult apply_edit(const ModelSpec& spec, const EditOp& edit, OperationalMode mode) {
    return apply_edits(spec, {edit}, mode);
}

std::vector<LayerKind> insertable_kinds(const ModelSpec& spec, std::size_t index) {
    if (index > spec.layers.size()) {
        throw ContractError("insert index " + std::to_string(index) + " out of range");
    }
    const std::size_t baseline = validate(spec, OperationalMode::expert).error_count();
    std::vector<LayerKind> out;
    for (int k = 0; k < static_cast<int>(std::variant_size_v<LayerParams>); ++k) {
        ModelSpec trial = spec;
        const auto kind = static_cast<LayerKind>(k);
        apply_payload(trial, AddLayer{index, default_layer(kind)});
        // An empty model always reports one error, which the insertion removes.
        const std::size_t errors = validate(trial, OperationalMode::expert).error_count();
        if (errors == 0 || (!spec.layers.empty() && errors <= baseline)) {
            out.push_back(kind);
        }
    }
    return out;
}

}  // namespace mlwb
