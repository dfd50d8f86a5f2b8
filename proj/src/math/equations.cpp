#include "mlwb/math/equations.hpp"

#include <algorithm>
#include <cstdio>

namespace mlwb {

namespace {

FormulaDef activation_def(const ActivationKind& a) {
    switch (a.name) {
        case Activation::linear:
            return {"linear", "linear(z) = z", "\\mathrm{linear}(z) = z"};
        case Activation::relu:
            return {"relu", "relu(z) = max(0, z)", "\\mathrm{relu}(z) = \\max(0, z)"};
        case Activation::elu: {
            const std::string alpha = format_fixed5(a.alpha);
            return {"elu", "elu(z) = z if z > 0, else " + alpha + " * (exp(z) - 1)",
                    "\\mathrm{elu}(z) = \\begin{cases} z & z > 0 \\\\ " + alpha +
                        " \\left(e^{z} - 1\\right) & z \\le 0 \\end{cases}"};
        }
        case Activation::sigmoid:
            return {"sigmoid", "sigmoid(z) = 1 / (1 + exp(-z))", "\\mathrm{sigmoid}(z) = \\frac{1}{1 + e^{-z}}"};
        case Activation::tanh:
            return {"tanh", "tanh(z) = (exp(z) - exp(-z)) / (exp(z) + exp(-z))",
                    "\\tanh(z) = \\frac{e^{z} - e^{-z}}{e^{z} + e^{-z}}"};
        case Activation::softmax:
            return {"softmax", "softmax(z)_i = exp(z_i) / sum_j exp(z_j)",
                    "\\mathrm{softmax}(z)_i = \\frac{e^{z_i}}{\\sum_j e^{z_j}}"};
    }
    return {};
}

FormulaDef loss_def(LossKind k) {
    if (k == LossKind::mse) {
        return {"mse", "MSE = (1/n) * sum_i (y_i - yhat_i)^2",
                "\\mathrm{MSE} = \\frac{1}{n} \\sum_{i} \\left(y_i - \\hat{y}_i\\right)^2"};
    }
    return {"categorical_crossentropy", "CE = -(1/n) * sum_i sum_k y_ik * log(yhat_ik)",
            "\\mathrm{CE} = -\\frac{1}{n} \\sum_{i} \\sum_{k} y_{ik} \\log \\hat{y}_{ik}"};
}

MatrixLiteral literal(const Tensor& t, std::size_t rows, std::size_t cols) {
    MatrixLiteral m{rows, cols, {}};
    m.cells.reserve(t.size());
    for (float v : t.values()) {
        m.cells.push_back(format_fixed5(v));
    }
    return m;
}

std::string text_matrix(const MatrixLiteral& m) {
    std::string out = "[";
    for (std::size_t r = 0; r < m.rows; ++r) {
        out += r == 0 ? "[" : " [";
        for (std::size_t c = 0; c < m.cols; ++c) {
            out += (c == 0 ? "" : ", ") + m.cells[r * m.cols + c];
        }
        out += "]";
    }
    return out + "]";
}

std::string latex_matrix(const MatrixLiteral& m) {
    std::string out = "\\begin{pmatrix} ";
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            out += (c == 0 ? "" : " & ") + m.cells[r * m.cols + c];
        }
        out += r + 1 < m.rows ? " \\\\ " : " ";
    }
    return out + "\\end{pmatrix}";
}

std::string latex_symbol(const std::string& s) {
    if (s == "x" || s == "y") {
        return "\\mathbf{" + s + "}";
    }
    return "\\mathbf{h}^{(" + s.substr(1) + ")}";
}

std::string latex_row_vector(const std::string& symbol, std::size_t n) {
    const std::string base = symbol == "x" || symbol == "y" ? symbol : "h^{(" + symbol.substr(1) + ")}";
    std::string out = "\\begin{pmatrix} ";
    for (std::size_t i = 0; i < n; ++i) {
        out += (i == 0 ? "" : " & ") + base + "_{" + std::to_string(i) + "}";
    }
    return out + " \\end{pmatrix}";
}

bool changes_values(LayerKind k) {
    return k == LayerKind::dense || k == LayerKind::batch_norm || k == LayerKind::activation;
}

}  // namespace

std::string format_fixed5(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.5f", v);
    std::string s(buf);
    if (s == "-0.00000") {
        s = "0.00000";
    }
    return s;
}

Eligibility math_eligibility(const ModelSpec& spec) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerKind k = spec.layers[i].kind();
        if (k == LayerKind::conv2d || k == LayerKind::max_pool2d) {
            return {false, "layer " + std::to_string(i) + " (" + std::string(to_string(k)) + ") has no equation form", i};
        }
    }
    if (spec.layers.empty()) {
        return {false, "the model has no layers", std::nullopt};
    }
    Shape in;
    try {
        in = input_shape(spec.input);
    } catch (const Error& e) {
        return {false, std::string("invalid input: ") + e.what(), std::nullopt};
    }
    if (in.size() != 1) {
        return {false, "the input is not a vector (shape " + to_string(in) + ")", std::nullopt};
    }
    return {true, "", std::nullopt};
}

EquationDoc render_equations(const CompiledModel& model) {
    const Eligibility el = math_eligibility(model.spec);
    if (!el.eligible) {
        throw ContractError("math mode unavailable: " + el.reason);
    }
    EquationDoc doc;
    doc.loss = loss_def(model.spec.loss);
    auto use_activation = [&](const ActivationKind& a) {
        const FormulaDef def = activation_def(a);
        const bool seen = std::any_of(doc.activations.begin(), doc.activations.end(),
                                      [&](const FormulaDef& d) { return d.name == def.name && d.text == def.text; });
        if (!seen) {
            doc.activations.push_back(def);
        }
        return def.name;
    };

    std::size_t last_valued = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (changes_values(model.layers[i].spec.kind())) {
            last_valued = i;
        }
    }

    std::string current = "x";
    std::size_t hidden = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const CompiledLayer& layer = model.layers[i];
        const LayerKind kind = layer.spec.kind();
        if (!changes_values(kind)) {
            doc.passthrough.push_back(i);
            continue;
        }
        EquationEntry e;
        e.layer = i;
        e.kind = kind;
        e.input = current;
        e.input_width = element_count(layer.shapes.input);
        e.output_width = element_count(layer.shapes.output);
        e.lhs = i == last_valued ? "y" : "h" + std::to_string(++hidden);
        const std::string in_text = current + " (1x" + std::to_string(e.input_width) + ")";
        const std::string in_latex = latex_row_vector(current, e.input_width);
        const std::string lhs_latex = latex_symbol(e.lhs) + " \\in \\mathbb{R}^{" + std::to_string(e.output_width) + "}";

        if (kind == LayerKind::dense) {
            const auto& p = layer.spec.as<DenseParams>();
            e.activation = use_activation(p.activation);
            const std::size_t rows = layer.weights[0].dim(0);
            const std::size_t cols = layer.weights[0].dim(1);
            e.operands.emplace_back("W", literal(layer.weights[0], rows, cols));
            std::string text_arg = in_text + " x W" + std::to_string(i);
            std::string latex_arg = in_latex + " " + latex_matrix(e.operands.back().second);
            if (p.use_bias) {
                e.operands.emplace_back("b", literal(layer.weights[1], 1, cols));
                text_arg += " + b" + std::to_string(i);
                latex_arg += " + " + latex_matrix(e.operands.back().second);
            }
            e.text = e.lhs + " (1x" + std::to_string(e.output_width) + ") = " + e.activation + "(" + text_arg + ")";
            for (const auto& [name, m] : e.operands) {
                e.text += "\n  " + name + std::to_string(i) + " (" + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols) + ") = " + text_matrix(m);
            }
            e.latex = lhs_latex + " = \\mathrm{" + e.activation + "}\\left(" + latex_arg + "\\right)";
        } else if (kind == LayerKind::batch_norm) {
            const auto& p = layer.spec.as<BatchNormParams>();
            const std::size_t c = layer.weights[0].size();
            const char* names[] = {"gamma", "beta", "mean", "variance"};
            for (std::size_t k = 0; k < 4; ++k) {
                e.operands.emplace_back(names[k], literal(layer.weights[k], 1, c));
            }
            const std::string eps = format_fixed5(p.epsilon);
            e.text = e.lhs + " = gamma * (" + current + " - mean) / sqrt(variance + " + eps + ") + beta";
            for (const auto& [name, m] : e.operands) {
                e.text += "\n  " + name + " = " + text_matrix(m);
            }
            e.latex = lhs_latex + " = " + latex_matrix(e.operands[0].second) + " \\odot \\frac{" + in_latex + " - " +
                      latex_matrix(e.operands[2].second) + "}{\\sqrt{" + latex_matrix(e.operands[3].second) + " + " +
                      eps + "}} + " + latex_matrix(e.operands[1].second);
        } else {
            e.activation = use_activation(layer.spec.as<ActivationParams>().activation);
            e.text = e.lhs + " = " + e.activation + "(" + current + ")";
            e.latex = lhs_latex + " = \\mathrm{" + e.activation + "}\\left(" + in_latex + "\\right)";
        }
        current = e.lhs;
        doc.equations.push_back(std::move(e));
    }
    return doc;
}

std::string to_text(const EquationDoc& doc) {
    std::string out = "Activations:\n";
    for (const auto& a : doc.activations) {
        out += "  " + a.text + "\n";
    }
    out += "Loss:\n  " + doc.loss.text + "\n";
    for (const auto& e : doc.equations) {
        out += "Layer " + std::to_string(e.layer) + " (" + std::string(to_string(e.kind)) + "):\n  " + e.text + "\n";
    }
    return out;
}

std::string to_latex(const EquationDoc& doc) {
    std::string out;
    for (const auto& a : doc.activations) {
        out += a.latex + "\n";
    }
    out += doc.loss.latex + "\n";
    for (const auto& e : doc.equations) {
        out += e.latex + "\n";
    }
    return out;
}

nlohmann::json to_json(const EquationDoc& doc) {
    auto formula = [](const FormulaDef& f) { return nlohmann::json{{"name", f.name}, {"text", f.text}, {"latex", f.latex}}; };
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& a : doc.activations) {
        acts.push_back(formula(a));
    }
    nlohmann::json eqs = nlohmann::json::array();
    for (const auto& e : doc.equations) {
        nlohmann::json ops = nlohmann::json::object();
        for (const auto& [name, m] : e.operands) {
            ops[name] = {{"rows", m.rows}, {"cols", m.cols}, {"cells", m.cells}};
        }
        eqs.push_back({{"layer", e.layer},
                       {"kind", to_string(e.kind)},
                       {"lhs", e.lhs},
                       {"input", e.input},
                       {"input_width", e.input_width},
                       {"output_width", e.output_width},
                       {"activation", e.activation},
                       {"operands", ops},
                       {"text", e.text},
                       {"latex", e.latex}});
    }
    return {{"format_version", 1},
            {"activations", acts},
            {"loss", formula(doc.loss)},
            {"equations", eqs},
            {"passthrough", doc.passthrough}};
}

std::string_view to_string(DeltaColor c) {
    switch (c) {
        case DeltaColor::black:
            return "black";
        case DeltaColor::green:
            return "green";
        case DeltaColor::red:
            return "red";
    }
    return "?";
}

std::vector<DeltaColor> classify_deltas(const Tensor& prev, const Tensor& curr, double epsilon) {
    if (prev.shape() != curr.shape()) {
        throw ShapeError("weight shapes differ: " + to_string(prev.shape()) + " vs " + to_string(curr.shape()));
    }
    std::vector<DeltaColor> out(prev.size(), DeltaColor::black);
    for (std::size_t i = 0; i < prev.size(); ++i) {
        const double d = static_cast<double>(curr[i]) - static_cast<double>(prev[i]);
        if (d > epsilon) {
            out[i] = DeltaColor::green;
        } else if (d < -epsilon) {
            out[i] = DeltaColor::red;
        }
    }
    return out;
}

std::vector<std::vector<std::vector<DeltaColor>>> classify_model_deltas(const CompiledModel& prev,
                                                                        const CompiledModel& curr, double epsilon) {
    if (prev.layers.size() != curr.layers.size()) {
        throw ShapeError("models have different layer counts");
    }
    std::vector<std::vector<std::vector<DeltaColor>>> out(curr.layers.size());
    for (std::size_t i = 0; i < curr.layers.size(); ++i) {
        if (prev.layers[i].weights.size() != curr.layers[i].weights.size()) {
            throw ShapeError("layer " + std::to_string(i) + " has a different number of weight tensors");
        }
        for (std::size_t j = 0; j < curr.layers[i].weights.size(); ++j) {
            out[i].push_back(classify_deltas(prev.layers[i].weights[j], curr.layers[i].weights[j], epsilon));
        }
    }
    return out;
}

}  // namespace mlwb
