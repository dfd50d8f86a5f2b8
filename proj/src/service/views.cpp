#include "mlwb/service/views.hpp"

#include <algorithm>
#include <set>

#include "mlwb/data/image.hpp"
#include "mlwb/data/tensor_literal.hpp"
#include "mlwb/explain/explain.hpp"
#include "mlwb/math/equations.hpp"
#include "mlwb/model/model_file.hpp"
#include "mlwb/train/forward.hpp"

namespace mlwb {

namespace {

void check_keys(const nlohmann::json& request, std::initializer_list<std::string_view> known) {
    if (!request.is_object()) {
        throw ParseError("request body must be a JSON object", 0);
    }
    for (const auto& [key, value] : request.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ParseError("unknown field", 0, key);
        }
    }
}

template <typename T>
T field(const nlohmann::json& request, const char* key) {
    try {
        return request.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(std::string("missing or mistyped field ") + key, 0, key);
    }
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const auto n = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
        out += table[(n >> 18) & 63];
        out += table[(n >> 12) & 63];
        out += table[(n >> 6) & 63];
        out += table[n & 63];
    }
    if (i < bytes.size()) {
        const bool two = i + 1 < bytes.size();
        const auto n = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (two ? static_cast<unsigned char>(bytes[i + 1]) << 8 : 0);
        out += table[(n >> 18) & 63];
        out += table[(n >> 12) & 63];
        out += two ? table[(n >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

Tensor image_for_model(const CompiledModel& model, const std::vector<std::uint8_t>& bytes) {
    const Shape in = model.input_shape();
    if (in.size() != 3 || (in[2] != 1 && in[2] != 3)) {
        throw ContractError("the model input is not an image");
    }
    const Tensor rgb = resize_image(decode_image(bytes), in[0], in[1]);
    if (in[2] == 3) {
        return rgb;
    }
    Tensor gray = Tensor::zeros({in[0], in[1], 1});
    for (std::size_t p = 0; p < in[0] * in[1]; ++p) {
        gray[p] = (rgb[3 * p] + rgb[3 * p + 1] + rgb[3 * p + 2]) / 3.0f;
    }
    return gray;
}

Tensor request_input(const nlohmann::json& request, const Dataset* dataset) {
    if (request.contains("input")) {
        return parse_tensor_literal(field<std::string>(request, "input"));
    }
    if (request.contains("sample")) {
        if (!dataset) {
            throw ContractError("no data set attached");
        }
        const auto k = field<std::size_t>(request, "sample");
        if (k >= dataset->size()) {
            throw ContractError("sample " + std::to_string(k) + " out of range (" + std::to_string(dataset->size()) +
                                " rows)");
        }
        Shape row(dataset->x.shape().begin() + 1, dataset->x.shape().end());
        const std::size_t n = dataset->x.size() / dataset->size();
        std::vector<float> data(dataset->x.data().begin() + static_cast<std::ptrdiff_t>(k * n),
                                dataset->x.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * n));
        return Tensor(row, std::move(data));
    }
    throw ParseError("request needs \"input\" or \"sample\"", 0, "input");
}

nlohmann::json predict_view(const CompiledModel& model, const Tensor& input) {
    const Tensor out = predict(model, input);
    return {{"format_version", 1},
            {"shape", out.shape()},
            {"output", tensor_to_json(out)},
            {"literal", format_tensor_literal(out)}};
}

std::vector<std::uint8_t> feature_png(const Tensor& image) { return encode_png(normalize_unit_range(image)); }

nlohmann::json featuremap_view(const CompiledModel& model, const nlohmann::json& request) {
    check_keys(request, {"layer", "unit", "steps", "step_size", "seed", "bounds"});
    FeatureMapOptions options;
    if (request.contains("steps")) {
        options.steps = field<std::int64_t>(request, "steps");
    }
    if (request.contains("step_size")) {
        options.step_size = field<double>(request, "step_size");
    }
    if (request.contains("seed")) {
        options.seed = field<std::uint64_t>(request, "seed");
    }
    if (request.contains("bounds")) {
        const auto b = field<std::vector<float>>(request, "bounds");
        if (b.size() != 2 || !(b[0] < b[1])) {
            throw ParseError("bounds must be [low, high] with low < high", 0, "bounds");
        }
        options.bounds = std::make_pair(b[0], b[1]);
    }
    const auto r = feature_map(model, field<std::size_t>(request, "layer"), field<std::size_t>(request, "unit"), options);
    nlohmann::json out{{"format_version", 1},    {"layer", r.layer},         {"unit", r.unit},
                       {"trace", r.trace},       {"converged", r.converged}, {"input", tensor_to_json(r.input)}};
    const auto& s = r.input.shape();
    if (s.size() == 3 && (s[2] == 1 || s[2] == 3)) {
        const auto png = feature_png(r.input);
        out["png"] = base64_encode({reinterpret_cast<const char*>(png.data()), png.size()});
    }
    return out;
}

nlohmann::json gradcam_view(const CompiledModel& model, const Tensor& input, const nlohmann::json& request) {
    check_keys(request, {"class_index", "conv_layer", "input", "sample"});
    std::optional<std::size_t> conv;
    if (request.contains("conv_layer")) {
        conv = field<std::size_t>(request, "conv_layer");
    }
    const Heatmap h = gradcam(model, input, field<std::size_t>(request, "class_index"), conv);
    const auto png = encode_png(colorize_heatmap(h.values));
    return {{"format_version", 1},
            {"class_index", h.class_index},
            {"conv_layer", h.conv_layer},
            {"heatmap", tensor_to_json(h.values)},
            {"png", base64_encode({reinterpret_cast<const char*>(png.data()), png.size()})}};
}

nlohmann::json layerio_view(const CompiledModel& model, const Tensor& input) {
    const LayerIO io = layer_io(model, input);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& e : io.layers) {
        nlohmann::json j{{"index", e.index},
                         {"kind", to_string(e.kind)},
                         {"input", tensor_to_json(e.input)},
                         {"output", tensor_to_json(e.output)}};
        if (e.kernels) {
            j["kernels"] = tensor_to_json(*e.kernels);
        }
        layers.push_back(std::move(j));
    }
    return {{"format_version", 1}, {"layers", layers}};
}

nlohmann::json mathmode_view(const CompiledModel& model, const CompiledModel* previous) {
    const Eligibility e = math_eligibility(model.spec);
    if (!e.eligible) {
        nlohmann::json out{{"format_version", 1}, {"eligible", false}, {"reason", e.reason}};
        if (e.layer) {
            out["layer"] = *e.layer;
        }
        return out;
    }
    const EquationDoc doc = render_equations(model);
    nlohmann::json out{{"format_version", 1},
                       {"eligible", true},
                       {"text", to_text(doc)},
                       {"latex", to_latex(doc)},
                       {"equations", to_json(doc)}};
    if (previous) {
        try {
            nlohmann::json deltas = nlohmann::json::array();
            for (const auto& layer : classify_model_deltas(*previous, model)) {
                nlohmann::json lj = nlohmann::json::array();
                for (const auto& tensor : layer) {
                    nlohmann::json tj = nlohmann::json::array();
                    for (auto c : tensor) {
                        tj.push_back(to_string(c));
                    }
                    lj.push_back(std::move(tj));
                }
                deltas.push_back(std::move(lj));
            }
            out["deltas"] = std::move(deltas);
        } catch (const Error&) {
            // Different architecture: no meaningful deltas.
        }
    }
    return out;
}

}  // namespace mlwb
