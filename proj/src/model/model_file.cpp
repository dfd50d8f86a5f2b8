#include "mlwb/model/model_file.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>
#include <set>
#include <string>

namespace mlwb {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "/" + key; }

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ParseError((path.empty() ? std::string("document") : path) + ": " + message, 0, path);
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) {
        fail(path, "expected an object");
    }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
    expect_object(j, path);
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            known = known || key == a;
        }
        if (!known) {
            fail(join(path, key), "unknown key '" + key + "'");
        }
    }
}

const json& require(const json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) {
        fail(join(path, key), "missing required key");
    }
    return *it;
}

std::int64_t read_int(const json& j, const std::string& path) {
    if (j.is_number_integer()) {
        return j.get<std::int64_t>();
    }
    if (j.is_number_unsigned()) {
        const auto v = j.get<std::uint64_t>();
        if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            fail(path, "integer out of range");
        }
        return static_cast<std::int64_t>(v);
    }
    fail(path, "expected an integer");
}

std::uint64_t read_uint(const json& j, const std::string& path) {
    if (j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
        return j.get<std::uint64_t>();
    }
    fail(path, "expected a non-negative integer");
}

double read_number(const json& j, const std::string& path) {
    if (!j.is_number()) {
        fail(path, "expected a number");
    }
    return j.get<double>();
}

bool read_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) {
        fail(path, "expected true or false");
    }
    return j.get<bool>();
}

const std::string& read_string(const json& j, const std::string& path) {
    if (!j.is_string()) {
        fail(path, "expected a string");
    }
    return j.get_ref<const std::string&>();
}

template <typename Parse>
auto read_enum(const json& j, const std::string& path, Parse parse) {
    const std::string& s = read_string(j, path);
    try {
        return parse(s);
    } catch (const ConfigError& e) {
        fail(path, e.what());
    }
}

std::vector<std::int64_t> read_int_list(const json& j, const std::string& path) {
    if (!j.is_array()) {
        fail(path, "expected an array of integers");
    }
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(read_int(j[i], join(path, std::to_string(i))));
    }
    return out;
}

std::array<std::int64_t, 2> read_pair(const json& j, const std::string& path) {
    if (j.is_number_integer() || j.is_number_unsigned()) {
        const std::int64_t v = read_int(j, path);
        return {v, v};
    }
    const auto v = read_int_list(j, path);
    if (v.size() != 2) {
        fail(path, "expected two integers");
    }
    return {v[0], v[1]};
}

InitializerKind initializer_from_json(const json& j, const std::string& path) {
    InitializerKind k;
    if (j.is_string()) {
        k.name = read_enum(j, path, parse_initializer);
        return k;
    }
    check_keys(j, {"name", "value", "mean", "stddev", "minval", "maxval", "seed"}, path);
    k.name = read_enum(require(j, "name", path), join(path, "name"), parse_initializer);
    auto opt = [&](const char* key, std::optional<double>& dst) {
        if (j.contains(key)) {
            dst = read_number(j.at(key), join(path, key));
        }
    };
    opt("value", k.value);
    opt("mean", k.mean);
    opt("stddev", k.stddev);
    opt("minval", k.minval);
    opt("maxval", k.maxval);
    if (j.contains("seed")) {
        k.seed = read_uint(j.at("seed"), join(path, "seed"));
    }
    return k;
}

Regularizer regularizer_from_json(const json& j, const std::string& path) {
    auto parse_kind = [&](const json& v, const std::string& p) {
        const std::string& s = read_string(v, p);
        for (auto k : {Regularizer::Kind::none, Regularizer::Kind::l1, Regularizer::Kind::l2}) {
            if (to_string(k) == s) {
                return k;
            }
        }
        fail(p, "unknown regularizer '" + s + "'");
    };
    Regularizer r;
    if (j.is_string()) {
        r.kind = parse_kind(j, path);
        return r;
    }
    check_keys(j, {"name", "lambda"}, path);
    r.kind = parse_kind(require(j, "name", path), join(path, "name"));
    if (j.contains("lambda")) {
        r.lambda = read_number(j.at("lambda"), join(path, "lambda"));
    }
    return r;
}

json number_or_special(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    return v;
}

json int_list(const std::vector<std::int64_t>& v) { return json(v); }

// Dense and conv2d share their trailing parameter block.
template <typename P>
void write_trainable_block(json& j, const P& p) {
    j["activation"] = to_json(p.activation);
    j["use_bias"] = p.use_bias;
    j["trainable"] = p.trainable;
    j["kernel_initializer"] = to_json(p.kernel_initializer);
    j["bias_initializer"] = to_json(p.bias_initializer);
    j["kernel_regularizer"] = to_json(p.kernel_regularizer);
    j["bias_regularizer"] = to_json(p.bias_regularizer);
}

template <typename P>
void read_trainable_block(const json& j, P& p, const std::string& path) {
    if (j.contains("activation")) {
        p.activation = activation_from_json(j.at("activation"), join(path, "activation"));
    }
    if (j.contains("use_bias")) {
        p.use_bias = read_bool(j.at("use_bias"), join(path, "use_bias"));
    }
    if (j.contains("trainable")) {
        p.trainable = read_bool(j.at("trainable"), join(path, "trainable"));
    }
    if (j.contains("kernel_initializer")) {
        p.kernel_initializer = initializer_from_json(j.at("kernel_initializer"), join(path, "kernel_initializer"));
    }
    if (j.contains("bias_initializer")) {
        p.bias_initializer = initializer_from_json(j.at("bias_initializer"), join(path, "bias_initializer"));
    }
    if (j.contains("kernel_regularizer")) {
        p.kernel_regularizer = regularizer_from_json(j.at("kernel_regularizer"), join(path, "kernel_regularizer"));
    }
    if (j.contains("bias_regularizer")) {
        p.bias_regularizer = regularizer_from_json(j.at("bias_regularizer"), join(path, "bias_regularizer"));
    }
}

}  // namespace

json to_json(const ActivationKind& a) {
    if (a.alpha == 1.0) {
        return std::string(to_string(a.name));
    }
    return json{{"name", to_string(a.name)}, {"alpha", a.alpha}};
}

json to_json(const InitializerKind& i) {
    if (!i.value && !i.mean && !i.stddev && !i.minval && !i.maxval && !i.seed) {
        return std::string(to_string(i.name));
    }
    json j{{"name", to_string(i.name)}};
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) {
            j[key] = *v;
        }
    };
    put("value", i.value);
    put("mean", i.mean);
    put("stddev", i.stddev);
    put("minval", i.minval);
    put("maxval", i.maxval);
    if (i.seed) {
        j["seed"] = *i.seed;
    }
    return j;
}

json to_json(const Regularizer& r) {
    if (r.kind == Regularizer::Kind::none && r.lambda == 0.0) {
        return "none";
    }
    return json{{"name", to_string(r.kind)}, {"lambda", r.lambda}};
}

json params_to_json(const LayerParams& params) {
    json j = json::object();
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, DenseParams>) {
                j["units"] = p.units;
                write_trainable_block(j, p);
            } else if constexpr (std::is_same_v<P, Conv2dParams>) {
                j["filters"] = p.filters;
                j["kernel_size"] = json::array({p.kernel_size[0], p.kernel_size[1]});
                j["stride"] = p.stride;
                j["padding"] = to_string(p.padding);
                write_trainable_block(j, p);
            } else if constexpr (std::is_same_v<P, MaxPool2dParams>) {
                j["pool_size"] = json::array({p.pool_size[0], p.pool_size[1]});
                j["stride"] = p.stride;
                j["padding"] = to_string(p.padding);
            } else if constexpr (std::is_same_v<P, ReshapeParams>) {
                j["target_shape"] = int_list(p.target_shape);
            } else if constexpr (std::is_same_v<P, DropoutParams>) {
                j["rate"] = p.rate;
            } else if constexpr (std::is_same_v<P, ActivationParams>) {
                j["activation"] = to_json(p.activation);
            } else if constexpr (std::is_same_v<P, BatchNormParams>) {
                j["momentum"] = p.momentum;
                j["epsilon"] = p.epsilon;
                j["trainable"] = p.trainable;
            } else if constexpr (std::is_same_v<P, GaussianNoiseParams>) {
                j["stddev"] = p.stddev;
            }
        },
        params);
    return j;
}

json to_json(const LayerSpec& layer) {
    return json{{"id", layer.id}, {"kind", to_string(layer.kind())}, {"params", params_to_json(layer.params)}};
}

json to_json(const InputDescriptor& input) {
    if (const auto* img = std::get_if<ImageInput>(&input)) {
        return json{{"type", "image"}, {"height", img->height}, {"width", img->width}, {"channels", img->channels}};
    }
    if (const auto* cols = std::get_if<ColumnsInput>(&input)) {
        return json{{"type", "columns"}, {"count", cols->count}};
    }
    return json{{"type", "custom"}, {"shape", int_list(std::get<CustomInput>(input).shape)}};
}

json to_json(const OptimizerSpec& o) {
    return json{{"kind", to_string(o.kind)},
                {"learning_rate", o.learning_rate},
                {"beta1", o.beta1},
                {"beta2", o.beta2},
                {"epsilon", o.epsilon}};
}

json to_json(const ModelSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec.layers) {
        layers.push_back(to_json(l));
    }
    return json{{"format_version", kModelFormatVersion},
                {"input", to_json(spec.input)},
                {"layers", layers},
                {"loss", to_string(spec.loss)},
                {"optimizer", to_json(spec.optimizer)}};
}

ActivationKind activation_from_json(const json& j, const std::string& path) {
    ActivationKind a;
    if (j.is_string()) {
        a.name = read_enum(j, path, parse_activation);
        return a;
    }
    check_keys(j, {"name", "alpha"}, path);
    a.name = read_enum(require(j, "name", path), join(path, "name"), parse_activation);
    if (j.contains("alpha")) {
        a.alpha = read_number(j.at("alpha"), join(path, "alpha"));
    }
    return a;
}

LayerParams params_from_json(LayerKind kind, const json& j, const std::string& path) {
    LayerParams out = default_layer(kind).params;
    std::visit(
        [&](auto& p) {
            using P = std::decay_t<decltype(p)>;
            auto has = [&](const char* key) { return j.contains(key); };
            auto at = [&](const char* key) -> const json& { return j.at(key); };
            auto sub = [&](const char* key) { return join(path, key); };
            if constexpr (std::is_same_v<P, DenseParams>) {
                check_keys(j, {"units", "activation", "use_bias", "trainable", "kernel_initializer", "bias_initializer",
                               "kernel_regularizer", "bias_regularizer"},
                           path);
                if (has("units")) {
                    p.units = read_int(at("units"), sub("units"));
                }
                read_trainable_block(j, p, path);
            } else if constexpr (std::is_same_v<P, Conv2dParams>) {
                check_keys(j, {"filters", "kernel_size", "stride", "padding", "activation", "use_bias", "trainable",
                               "kernel_initializer", "bias_initializer", "kernel_regularizer", "bias_regularizer"},
                           path);
                if (has("filters")) {
                    p.filters = read_int(at("filters"), sub("filters"));
                }
                if (has("kernel_size")) {
                    p.kernel_size = read_pair(at("kernel_size"), sub("kernel_size"));
                }
                if (has("stride")) {
                    p.stride = read_int(at("stride"), sub("stride"));
                }
                if (has("padding")) {
                    p.padding = read_enum(at("padding"), sub("padding"), parse_padding);
                }
                read_trainable_block(j, p, path);
            } else if constexpr (std::is_same_v<P, MaxPool2dParams>) {
                check_keys(j, {"pool_size", "stride", "padding"}, path);
                if (has("pool_size")) {
                    p.pool_size = read_pair(at("pool_size"), sub("pool_size"));
                }
                if (has("stride")) {
                    p.stride = read_int(at("stride"), sub("stride"));
                }
                if (has("padding")) {
                    p.padding = read_enum(at("padding"), sub("padding"), parse_padding);
                }
            } else if constexpr (std::is_same_v<P, FlattenParams>) {
                check_keys(j, {}, path);
            } else if constexpr (std::is_same_v<P, ReshapeParams>) {
                check_keys(j, {"target_shape"}, path);
                if (has("target_shape")) {
                    p.target_shape = read_int_list(at("target_shape"), sub("target_shape"));
                }
            } else if constexpr (std::is_same_v<P, DropoutParams>) {
                check_keys(j, {"rate"}, path);
                if (has("rate")) {
                    p.rate = read_number(at("rate"), sub("rate"));
                }
            } else if constexpr (std::is_same_v<P, ActivationParams>) {
                check_keys(j, {"activation"}, path);
                if (has("activation")) {
                    p.activation = activation_from_json(at("activation"), sub("activation"));
                }
            } else if constexpr (std::is_same_v<P, BatchNormParams>) {
                check_keys(j, {"momentum", "epsilon", "trainable"}, path);
                if (has("momentum")) {
                    p.momentum = read_number(at("momentum"), sub("momentum"));
                }
                if (has("epsilon")) {
                    p.epsilon = read_number(at("epsilon"), sub("epsilon"));
                }
                if (has("trainable")) {
                    p.trainable = read_bool(at("trainable"), sub("trainable"));
                }
            } else if constexpr (std::is_same_v<P, GaussianNoiseParams>) {
                check_keys(j, {"stddev"}, path);
                if (has("stddev")) {
                    p.stddev = read_number(at("stddev"), sub("stddev"));
                }
            }
        },
        out);
    return out;
}

LayerSpec layer_from_json(const json& j, const std::string& path) {
    check_keys(j, {"id", "kind", "params"}, path);
    const std::string kpath = join(path, "kind");
    const std::string& name = read_string(require(j, "kind", path), kpath);
    LayerKind kind;
    try {
        kind = parse_layer_kind(name);
    } catch (const ConfigError&) {
        fail(kpath, "unknown layer kind '" + name + "'");
    }
    LayerSpec layer;
    if (j.contains("id")) {
        layer.id = read_uint(j.at("id"), join(path, "id"));
    }
    layer.params = params_from_json(kind, j.contains("params") ? j.at("params") : json::object(),
                                    join(path, "params"));
    return layer;
}

InputDescriptor input_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    const std::string tpath = join(path, "type");
    const std::string& type = read_string(require(j, "type", path), tpath);
    if (type == "image") {
        check_keys(j, {"type", "height", "width", "channels"}, path);
        ImageInput img;
        img.height = read_int(require(j, "height", path), join(path, "height"));
        img.width = read_int(require(j, "width", path), join(path, "width"));
        if (j.contains("channels")) {
            img.channels = read_int(j.at("channels"), join(path, "channels"));
        }
        return img;
    }
    if (type == "columns") {
        check_keys(j, {"type", "count"}, path);
        return ColumnsInput{read_int(require(j, "count", path), join(path, "count"))};
    }
    if (type == "custom") {
        check_keys(j, {"type", "shape"}, path);
        return CustomInput{read_int_list(require(j, "shape", path), join(path, "shape"))};
    }
    fail(tpath, "unknown input type '" + type + "'");
}

OptimizerSpec optimizer_from_json(const json& j, const std::string& path) {
    OptimizerSpec o;
    if (j.is_string()) {
        o.kind = read_enum(j, path, parse_optimizer);
        return o;
    }
    check_keys(j, {"kind", "learning_rate", "beta1", "beta2", "epsilon"}, path);
    o.kind = read_enum(require(j, "kind", path), join(path, "kind"), parse_optimizer);
    auto opt = [&](const char* key, double& dst) {
        if (j.contains(key)) {
            dst = read_number(j.at(key), join(path, key));
        }
    };
    opt("learning_rate", o.learning_rate);
    opt("beta1", o.beta1);
    opt("beta2", o.beta2);
    opt("epsilon", o.epsilon);
    return o;
}

ModelSpec spec_from_json(const json& j, const std::string& path) {
    check_keys(j, {"format_version", "input", "layers", "loss", "optimizer", "weights"}, path);
    const std::string vpath = join(path, "format_version");
    if (read_int(require(j, "format_version", path), vpath) != kModelFormatVersion) {
        fail(vpath, "unsupported format version (expected " + std::to_string(kModelFormatVersion) + ")");
    }
    ModelSpec spec;
    spec.input = input_from_json(require(j, "input", path), join(path, "input"));
    const std::string lpath = join(path, "layers");
    const json& layers = require(j, "layers", path);
    if (!layers.is_array()) {
        fail(lpath, "expected an array");
    }
    std::set<std::uint64_t> ids;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string p = join(lpath, std::to_string(i));
        LayerSpec layer = layer_from_json(layers[i], p);
        if (layer.id != 0 && !ids.insert(layer.id).second) {
            fail(join(p, "id"), "duplicate layer id " + std::to_string(layer.id));
        }
        spec.layers.push_back(std::move(layer));
    }
    assign_layer_ids(spec);
    if (j.contains("loss")) {
        spec.loss = read_enum(j.at("loss"), join(path, "loss"), parse_loss);
    }
    if (j.contains("optimizer")) {
        spec.optimizer = optimizer_from_json(j.at("optimizer"), join(path, "optimizer"));
    }
    return spec;
}

json tensor_to_json(const Tensor& t) {
    json data = json::array();
    for (float v : t.data()) {
        data.push_back(number_or_special(v));
    }
    return json{{"shape", t.shape()}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const json& j, const std::string& path) {
    check_keys(j, {"shape", "data"}, path);
    const std::string spath = join(path, "shape");
    Shape shape;
    for (std::int64_t d : read_int_list(require(j, "shape", path), spath)) {
        if (d < 1) {
            fail(spath, "dimensions must be positive");
        }
        shape.push_back(static_cast<std::size_t>(d));
    }
    const std::string dpath = join(path, "data");
    const json& data = require(j, "data", path);
    if (!data.is_array()) {
        fail(dpath, "expected an array");
    }
    if (data.size() != element_count(shape)) {
        fail(dpath, "expected " + std::to_string(element_count(shape)) + " values, got " + std::to_string(data.size()));
    }
    std::vector<float> values;
    values.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const json& v = data[i];
        if (v.is_string()) {
            const auto& s = v.get_ref<const std::string&>();
            if (s == "nan") {
                values.push_back(std::numeric_limits<float>::quiet_NaN());
            } else if (s == "inf") {
                values.push_back(std::numeric_limits<float>::infinity());
            } else if (s == "-inf") {
                values.push_back(-std::numeric_limits<float>::infinity());
            } else {
                fail(join(dpath, std::to_string(i)), "expected a number");
            }
        } else {
            values.push_back(static_cast<float>(read_number(v, join(dpath, std::to_string(i)))));
        }
    }
    return Tensor(std::move(shape), std::move(values));
}

std::string save_model(const CompiledModel& model) {
    json j = to_json(model.spec);
    json weights = json::array();
    for (const auto& layer : model.layers) {
        json lw = json::array();
        for (const auto& w : layer.weights) {
            lw.push_back(tensor_to_json(w));
        }
        weights.push_back(std::move(lw));
    }
    j["weights"] = std::move(weights);
    return j.dump(1) + "\n";
}

std::string save_model(const ModelSpec& spec) {
    json j = to_json(spec);
    j["weights"] = json::array();
    return j.dump(1) + "\n";
}

LoadedModel load_model(std::string_view bytes) {
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed model file: ") + e.what(), e.byte, "");
    }
    LoadedModel out;
    out.spec = spec_from_json(j);
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        if (!w.is_array()) {
            fail("weights", "expected an array");
        }
        if (!w.empty() && w.size() != out.spec.layers.size()) {
            fail("weights", "expected one entry per layer (" + std::to_string(out.spec.layers.size()) + "), got " +
                                std::to_string(w.size()));
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            const std::string p = "weights/" + std::to_string(i);
            if (!w[i].is_array()) {
                fail(p, "expected an array");
            }
            std::vector<Tensor> layer;
            for (std::size_t k = 0; k < w[i].size(); ++k) {
                layer.push_back(tensor_from_json(w[i][k], p + "/" + std::to_string(k)));
            }
            out.weights.push_back(std::move(layer));
        }
    }
    return out;
}

CompiledModel load_compiled(std::string_view bytes, std::uint64_t seed) {
    LoadedModel m = load_model(bytes);
    if (m.weights.empty()) {
        return compile(m.spec, seed);
    }
    return compile_with_weights(m.spec, m.weights, seed);
}

}  // namespace mlwb
