#include "mlwb/codegen/python.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "mlwb/model/shape_inference.hpp"
#include "mlwb/model/validate.hpp"

namespace mlwb {

namespace {

/// Line-oriented writer with an explicit indentation level (4 spaces per level).
class ScriptWriter {
public:
    ScriptWriter& line(std::string_view text = {}) {
        if (!text.empty()) {
            out_.append(static_cast<std::size_t>(depth_) * 4, ' ');
            out_.append(text);
        }
        out_.push_back('\n');
        return *this;
    }
    ScriptWriter& open(std::string_view text) {
        line(text);
        ++depth_;
        return *this;
    }
    ScriptWriter& close() {
        --depth_;
        return *this;
    }
    std::string str() const { return out_; }

private:
    std::string out_;
    int depth_ = 0;
};

std::string py_str(std::string_view s) { return "\"" + std::string(s) + "\""; }

std::string python_dims(const std::vector<std::int64_t>& dims) {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i > 0) {
            s += ", ";
        }
        s += std::to_string(dims[i]);
    }
    if (dims.size() == 1) {
        s += ",";
    }
    return s + ")";
}

std::string python_tuple(const Shape& shape) {
    return python_dims(std::vector<std::int64_t>(shape.begin(), shape.end()));
}

/// numpy seeds must fit in 32 bits.
std::uint64_t python_seed(std::uint64_t seed) { return seed & 0xffffffffULL; }

std::string data_file_name(const ModelSpec& spec) {
    return input_shape(spec.input).size() == 1 ? "dataset.csv" : "dataset.json";
}

std::string python_bool(bool b) { return b ? "True" : "False"; }

std::string initializer_expr(const InitializerKind& init) {
    auto seed_arg = [&] { return init.seed ? ", seed=" + std::to_string(python_seed(*init.seed)) : std::string{}; };
    switch (init.name) {
        case Initializer::zeros:
            return py_str("zeros");
        case Initializer::ones:
            return py_str("ones");
        case Initializer::constant:
            return "initializers.Constant(" + python_float(init.value.value_or(0.0)) + ")";
        case Initializer::glorot_uniform:
            return init.seed ? "initializers.GlorotUniform(seed=" + std::to_string(python_seed(*init.seed)) + ")"
                             : py_str("glorot_uniform");
        case Initializer::he_uniform:
            return init.seed ? "initializers.HeUniform(seed=" + std::to_string(python_seed(*init.seed)) + ")"
                             : py_str("he_uniform");
        case Initializer::random_normal:
            return "initializers.RandomNormal(mean=" + python_float(init.mean.value_or(0.0)) +
                   ", stddev=" + python_float(init.stddev.value_or(0.05)) + seed_arg() + ")";
        case Initializer::random_uniform:
            return "initializers.RandomUniform(minval=" + python_float(init.minval.value_or(-0.05)) +
                   ", maxval=" + python_float(init.maxval.value_or(0.05)) + seed_arg() + ")";
    }
    return py_str("zeros");
}

std::string regularizer_expr(const Regularizer& r) {
    switch (r.kind) {
        case Regularizer::Kind::none:
            return "None";
        case Regularizer::Kind::l1:
            return "regularizers.L1(" + python_float(r.lambda) + ")";
        case Regularizer::Kind::l2:
            return "regularizers.L2(" + python_float(r.lambda) + ")";
    }
    return "None";
}

/// Activation name for a Dense/Conv2D argument; Keras's built-in elu has alpha 1.
std::string fused_activation(const ActivationKind& a, std::size_t layer) {
    if (a.name == Activation::elu && a.alpha != 1.0) {
        throw CodegenError("layer " + std::to_string(layer) + ": elu with alpha " + python_float(a.alpha) +
                               " inside a dense or conv2d layer has no Keras equivalent; use a separate "
                               "activation layer",
                           layer);
    }
    return py_str(to_string(a.name));
}

struct Construct {
    std::string name;
    std::vector<std::string> args;
};

template <typename P>
void weighted_args(std::vector<std::string>& args, const P& p) {
    args.push_back("use_bias=" + python_bool(p.use_bias));
    args.push_back("kernel_initializer=" + initializer_expr(p.kernel_initializer));
    args.push_back("bias_initializer=" + initializer_expr(p.bias_initializer));
    args.push_back("kernel_regularizer=" + regularizer_expr(p.kernel_regularizer));
    args.push_back("bias_regularizer=" + regularizer_expr(p.bias_regularizer));
    args.push_back("trainable=" + python_bool(p.trainable));
}

Construct construct_for(const LayerSpec& layer, std::size_t index) {
    Construct c;
    switch (layer.kind()) {
        case LayerKind::dense: {
            const auto& p = layer.as<DenseParams>();
            c.name = "layers.Dense";
            c.args.push_back(std::to_string(p.units));
            c.args.push_back("activation=" + fused_activation(p.activation, index));
            weighted_args(c.args, p);
            break;
        }
        case LayerKind::conv2d: {
            const auto& p = layer.as<Conv2dParams>();
            c.name = "layers.Conv2D";
            c.args.push_back(std::to_string(p.filters));
            c.args.push_back("kernel_size=" + python_dims({p.kernel_size[0], p.kernel_size[1]}));
            c.args.push_back("strides=" + python_dims({p.stride, p.stride}));
            c.args.push_back("padding=" + py_str(to_string(p.padding)));
            c.args.push_back("activation=" + fused_activation(p.activation, index));
            weighted_args(c.args, p);
            break;
        }
        case LayerKind::max_pool2d: {
            const auto& p = layer.as<MaxPool2dParams>();
            c.name = "layers.MaxPooling2D";
            c.args.push_back("pool_size=" + python_dims({p.pool_size[0], p.pool_size[1]}));
            c.args.push_back("strides=" + python_dims({p.stride, p.stride}));
            c.args.push_back("padding=" + py_str(to_string(p.padding)));
            break;
        }
        case LayerKind::flatten:
            c.name = "layers.Flatten";
            break;
        case LayerKind::reshape:
            c.name = "layers.Reshape";
            c.args.push_back(python_dims(layer.as<ReshapeParams>().target_shape));
            break;
        case LayerKind::dropout:
            c.name = "layers.Dropout";
            c.args.push_back(python_float(layer.as<DropoutParams>().rate));
            break;
        case LayerKind::activation: {
            const auto& a = layer.as<ActivationParams>().activation;
            if (a.name == Activation::elu && a.alpha != 1.0) {
                c.name = "layers.ELU";
                c.args.push_back("alpha=" + python_float(a.alpha));
            } else {
                c.name = "layers.Activation";
                c.args.push_back(py_str(to_string(a.name)));
            }
            break;
        }
        case LayerKind::batch_norm: {
            const auto& p = layer.as<BatchNormParams>();
            c.name = "layers.BatchNormalization";
            c.args.push_back("momentum=" + python_float(p.momentum));
            c.args.push_back("epsilon=" + python_float(p.epsilon));
            c.args.push_back("trainable=" + python_bool(p.trainable));
            break;
        }
        case LayerKind::gaussian_noise:
            c.name = "layers.GaussianNoise";
            c.args.push_back(python_float(layer.as<GaussianNoiseParams>().stddev));
            break;
    }
    c.args.push_back("name=" + py_str(std::string(to_string(layer.kind())) + "_" + std::to_string(index)));
    return c;
}

std::string keras_loss(LossKind loss) {
    return loss == LossKind::categorical_crossentropy ? "categorical_crossentropy" : "mean_squared_error";
}

std::string optimizer_expr(const OptimizerSpec& o) {
    if (o.kind == OptimizerKind::sgd) {
        return "keras.optimizers.SGD(learning_rate=" + python_float(o.learning_rate) + ")";
    }
    return "keras.optimizers.Adam(learning_rate=" + python_float(o.learning_rate) +
           ", beta_1=" + python_float(o.beta1) + ", beta_2=" + python_float(o.beta2) +
           ", epsilon=" + python_float(o.epsilon) + ")";
}

void emit_header(ScriptWriter& w, const ModelSpec& spec) {
    w.line("#!/usr/bin/env python3");
    w.line("\"\"\"Sequential Keras model exported from the ML workbench.");
    w.line();
    w.line("Trains the model on a data file, or only runs inference with --predict-only.");
    w.line("Weights are read from and written to workbench model files (model.json).");
    w.line();
    w.line("    python train.py --data dataset.csv --weights model.json");
    w.line("    python train.py --data dataset.csv --weights model.json --predict-only");
    w.line("\"\"\"");
    w.line();
    w.line("import argparse");
    w.line("import json");
    w.line("import os");
    w.line();
    w.line("import numpy as np");
    w.line("import keras");
    w.line("from keras import initializers, layers, regularizers");
    w.line();
    w.line("INPUT_SHAPE = " + python_tuple(input_shape(spec.input)));
}

void emit_data_functions(ScriptWriter& w) {
    w.open("def decode_tensor(doc):");
    w.line("\"\"\"Workbench tensor JSON ({\"shape\": [...], \"data\": [...]}) to a float32 array.\"\"\"");
    w.line("values = [float(v) for v in doc[\"data\"]]");
    w.line("return np.asarray(values, dtype=np.float32).reshape(doc[\"shape\"])");
    w.close().line().line();

    w.open("def encode_tensor(array):");
    w.line("flat = np.asarray(array, dtype=np.float64).reshape(-1)");
    w.line("data = [v if np.isfinite(v) else str(v) for v in flat.tolist()]");
    w.line("return {\"shape\": list(array.shape), \"data\": data}");
    w.close().line().line();

    w.open("def load_data(path):");
    w.line("\"\"\"Returns (x, y) as float32 arrays.");
    w.line();
    w.line("To use your own data, write it in one of these formats or replace this");
    w.line("function with code returning arrays of the same shapes:");
    w.line("    x: (samples,) + INPUT_SHAPE");
    w.line("    y: (samples,) + OUTPUT_SHAPE");
    w.line("CSV: one header row, then INPUT_COLUMNS input values per row (flattened");
    w.line("row-major for multi-dimensional inputs) followed by the target values.");
    w.line("Scale inputs the same way as during training in the workbench.");
    w.line("JSON: a workbench data set file with \"x\" and \"y\" tensors.");
    w.line("\"\"\"");
    w.open("if path.endswith(\".json\"):");
    w.open("with open(path) as f:");
    w.line("doc = json.load(f)");
    w.close();
    w.line("x, y = decode_tensor(doc[\"x\"]), decode_tensor(doc[\"y\"])");
    w.close().open("else:");
    w.line("# Adjust the delimiter for semicolon- or tab-separated files.");
    w.line("table = np.loadtxt(path, delimiter=\",\", skiprows=1, dtype=np.float32, ndmin=2)");
    w.line("x, y = table[:, :INPUT_COLUMNS], table[:, INPUT_COLUMNS:]");
    w.close();
    w.line("return x.reshape((-1,) + INPUT_SHAPE), y.reshape((-1,) + OUTPUT_SHAPE)");
    w.close().line().line();
}

void emit_build_model(ScriptWriter& w, const ModelSpec& spec, std::vector<ManifestEntry>& manifest) {
    w.open("def build_model():");
    w.line("model = keras.Sequential(name=\"workbench_model\")");
    w.line("model.add(keras.Input(shape=INPUT_SHAPE))");
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Construct c = construct_for(spec.layers[i], i);
        manifest.push_back({i, c.name});
        w.line("# layer " + std::to_string(i) + ": " + std::string(to_string(spec.layers[i].kind())));
        if (c.args.size() <= 2) {
            std::string call = "model.add(" + c.name + "(";
            for (std::size_t a = 0; a < c.args.size(); ++a) {
                call += (a > 0 ? ", " : "") + c.args[a];
            }
            w.line(call + "))");
            continue;
        }
        w.open("model.add(" + c.name + "(");
        for (const auto& a : c.args) {
            w.line(a + ",");
        }
        w.close().line("))");
    }
    w.open("model.compile(");
    w.line("loss=" + py_str(keras_loss(spec.loss)) + ",");
    w.line("optimizer=" + optimizer_expr(spec.optimizer) + ",");
    w.line(std::string("metrics=") + (spec.loss == LossKind::categorical_crossentropy ? "[\"accuracy\"]" : "[]") +
           ",");
    w.close().line(")");
    w.line("return model");
    w.close().line().line();
}

void emit_weight_functions(ScriptWriter& w) {
    w.open("def load_weights(model, path):");
    w.line("\"\"\"Copies the weights of a workbench model file into the model; returns the file.\"\"\"");
    w.open("with open(path) as f:");
    w.line("doc = json.load(f)");
    w.close();
    w.line("stored = doc.get(\"weights\") or []");
    w.open("if not stored:");
    w.line("print(\"note: \" + path + \" has no weights; keeping the fresh initialization\")");
    w.line("return doc");
    w.close();
    w.open("if len(stored) != len(model.layers):");
    w.line("raise SystemExit(path + \": expected weights for \" + str(len(model.layers)) + \" layers\")");
    w.close();
    w.open("for layer, tensors in zip(model.layers, stored):");
    w.open("if tensors:");
    w.line("layer.set_weights([decode_tensor(t) for t in tensors])");
    w.close().close();
    w.line("return doc");
    w.close().line().line();

    w.open("def save_weights(model, doc, path):");
    w.line("\"\"\"Writes the model file `doc` with the model's current weights.\"\"\"");
    w.line("out = dict(doc)");
    w.line("out[\"weights\"] = [[encode_tensor(t) for t in layer.get_weights()] for layer in model.layers]");
    w.open("with open(path, \"w\") as f:");
    w.line("json.dump(out, f, indent=1)");
    w.close().close().line().line();
}

void emit_main(ScriptWriter& w) {
    w.open("def resolve(path):");
    w.line("\"\"\"Paths that do not exist relative to the working directory are looked up next to this script.\"\"\"");
    w.open("if os.path.isabs(path) or os.path.exists(path):");
    w.line("return path");
    w.close();
    w.line("return os.path.join(os.path.dirname(os.path.abspath(__file__)), path)");
    w.close().line().line();

    w.open("def parse_args():");
    w.line("parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])");
    w.line("parser.add_argument(\"--data\", default=DEFAULT_DATA, help=\"CSV or JSON data file\")");
    w.line("parser.add_argument(\"--weights\", help=\"workbench model file to load weights from\")");
    w.line("parser.add_argument(\"--save-weights\", help=\"write the trained weights to this model file\")");
    w.line("parser.add_argument(\"--predict-only\", action=\"store_true\", help=\"skip training\")");
    w.line("parser.add_argument(\"--epochs\", type=int, default=EPOCHS)");
    w.line("parser.add_argument(\"--batch-size\", type=int, default=BATCH_SIZE)");
    w.line("args = parser.parse_args()");
    w.open("if args.save_weights and not args.weights:");
    w.line("parser.error(\"--save-weights needs --weights (the model file supplies the architecture)\")");
    w.close();
    w.line("return args");
    w.close().line().line();

    w.open("def main():");
    w.line("args = parse_args()");
    w.line("keras.utils.set_random_seed(SEED)");
    w.line("model = build_model()");
    w.line("doc = load_weights(model, resolve(args.weights)) if args.weights else None");
    w.line("x, y = load_data(resolve(args.data))");
    w.open("if not args.predict_only:");
    w.open("model.fit(");
    w.line("x,");
    w.line("y,");
    w.line("epochs=args.epochs,");
    w.line("batch_size=args.batch_size,");
    w.line("shuffle=SHUFFLE,");
    w.line("validation_split=VALIDATION_SPLIT,");
    w.line("verbose=2,");
    w.close().line(")");
    w.open("if args.save_weights:");
    w.line("save_weights(model, doc, args.save_weights)");
    w.close().close();
    w.line("# To apply the model to new samples, pass an array shaped (n,) + INPUT_SHAPE.");
    w.line("predictions = model.predict(x, verbose=0)");
    w.open("for row in predictions[:10]:");
    w.line("print(\" \".join(\"%.5f\" % v for v in np.ravel(row)))");
    w.close();
    w.line("results = model.evaluate(x, y, verbose=0, return_dict=True)");
    w.line("print(\"loss: %.6f\" % results[\"loss\"])");
    w.open("if \"accuracy\" in results:");
    w.line("print(\"accuracy: %.4f\" % results[\"accuracy\"])");
    w.close().close().line().line();

    w.open("if __name__ == \"__main__\":");
    w.line("main()");
    w.close();
}

std::string instructions_text(const ModelSpec& spec, const TrainConfig& config) {
    const std::string data = data_file_name(spec);
    std::ostringstream o;
    o << "Exported model: " << spec.layers.size() << " layers, input shape "
      << python_tuple(input_shape(spec.input)) << ", loss " << keras_loss(spec.loss) << ", optimizer "
      << to_string(spec.optimizer.kind) << ".\n"
      << "Training defaults: " << config.epochs << " epochs, batch size " << config.batch_size << ".\n\n"
      << "1. Create and activate a virtual environment\n"
      << "     python3 -m venv .venv\n"
      << "     . .venv/bin/activate        (Windows: .venv\\Scripts\\activate)\n\n"
      << "2. Install the dependencies\n"
      << "     pip install tensorflow==" << kTensorflowVersion << " numpy\n\n"
      << "3. Run the script\n"
      << "   Train, starting from the exported weights, and save the result:\n"
      << "     python train.py --data " << data << " --weights model.json --save-weights trained.json\n"
      << "   Inference only:\n"
      << "     python train.py --data " << data << " --weights model.json --predict-only\n"
      << "   Without --weights the model starts from a fresh initialization.\n\n"
      << "Local data: --data accepts a CSV file (header row, input columns then target\n"
      << "columns) or a workbench data set JSON file. See load_data() in train.py for\n"
      << "the expected shapes and how to plug in other sources.\n";
    return o.str();
}

}  // namespace

std::string python_float(double v) {
    if (std::isnan(v)) {
        return "float(\"nan\")";
    }
    if (std::isinf(v)) {
        return v > 0 ? "float(\"inf\")" : "-float(\"inf\")";
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".e") == std::string::npos) {
        s += ".0";
    }
    return s;
}

GeneratedProgram generate_python(const ModelSpec& spec, const TrainConfig& config) {
    const ValidationReport report = validate(spec, OperationalMode::expert);
    if (report.has_errors()) {
        std::string first;
        for (const auto& f : report.findings) {
            if (f.severity == Severity::error) {
                first = f.message;
                break;
            }
        }
        throw ContractError("cannot export a model with validation errors: " + first);
    }
    const auto shapes = infer_shapes(spec);
    const Shape in_shape = input_shape(spec.input);
    const Shape out_shape = shapes.back().output;

    GeneratedProgram program;
    ScriptWriter w;
    emit_header(w, spec);
    w.line("INPUT_COLUMNS = " + std::to_string(element_count(in_shape)));
    w.line("OUTPUT_SHAPE = " + python_tuple(out_shape));
    w.line("EPOCHS = " + std::to_string(config.epochs));
    w.line("BATCH_SIZE = " + std::to_string(config.batch_size));
    w.line("SHUFFLE = " + python_bool(config.shuffle));
    w.line("SEED = " + std::to_string(python_seed(config.seed)));
    w.line("VALIDATION_SPLIT = " + python_float(config.validation_split));
    w.line("DEFAULT_DATA = " + py_str(data_file_name(spec)));
    w.line().line();
    emit_data_functions(w);
    emit_build_model(w, spec, program.manifest);
    emit_weight_functions(w);
    emit_main(w);

    program.source = w.str();
    program.instructions = instructions_text(spec, config);
    return program;
}

}  // namespace mlwb
