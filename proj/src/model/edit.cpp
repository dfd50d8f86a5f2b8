#include "mlwb/model/edit.hpp"

#include <string>

#include "mlwb/model/model_file.hpp"

namespace mlwb {

using nlohmann::json;

namespace {

void check_index(std::size_t index, std::size_t limit, const char* what) {
    if (index >= limit) {
        throw ContractError(std::string(what) + " index " + std::to_string(index) + " out of range (" +
                            std::to_string(limit) + " layers)");
    }
}

json payload_to_json(const EditPayload& payload) {
    return std::visit(
        [](const auto& p) -> json {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, AddLayer>) {
                return json{{"kind", "add_layer"}, {"index", p.index}, {"layer", to_json(p.layer)}};
            } else if constexpr (std::is_same_v<P, RemoveLayer>) {
                return json{{"kind", "remove_layer"}, {"index", p.index}};
            } else if constexpr (std::is_same_v<P, MoveLayer>) {
                return json{{"kind", "move_layer"}, {"from", p.from}, {"to", p.to}};
            } else if constexpr (std::is_same_v<P, SetParam>) {
                return json{{"kind", "set_param"}, {"index", p.index}, {"field", p.field}, {"value", p.value}};
            } else if constexpr (std::is_same_v<P, SetInputDescriptor>) {
                return json{{"kind", "set_input_descriptor"}, {"input", to_json(p.input)}};
            } else if constexpr (std::is_same_v<P, SetLoss>) {
                return json{{"kind", "set_loss"}, {"loss", to_string(p.loss)}};
            } else {
                return json{{"kind", "set_optimizer"}, {"optimizer", to_json(p.optimizer)}};
            }
        },
        payload);
}

std::size_t read_index(const json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    const std::string p = path + "/" + key;
    if (it == j.end()) {
        throw ParseError(p + ": missing required key", 0, p);
    }
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
        throw ParseError(p + ": expected a non-negative integer", 0, p);
    }
    return it->get<std::size_t>();
}

const json& member(const json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) {
        const std::string p = path + "/" + key;
        throw ParseError(p + ": missing required key", 0, p);
    }
    return *it;
}

EditPayload payload_from_json(const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
        throw ParseError(path + ": edit needs a string 'kind'", 0, path);
    }
    const std::string& kind = j.at("kind").get_ref<const std::string&>();
    if (kind == "add_layer") {
        AddLayer a;
        a.index = read_index(j, "index", path);
        a.layer = layer_from_json(member(j, "layer", path), path + "/layer");
        return a;
    }
    if (kind == "remove_layer") {
        return RemoveLayer{read_index(j, "index", path)};
    }
    if (kind == "move_layer") {
        return MoveLayer{read_index(j, "from", path), read_index(j, "to", path)};
    }
    if (kind == "set_param") {
        const json& field = member(j, "field", path);
        if (!field.is_string()) {
            throw ParseError(path + "/field: expected a string", 0, path + "/field");
        }
        return SetParam{read_index(j, "index", path), field.get<std::string>(), member(j, "value", path)};
    }
    if (kind == "set_input_descriptor") {
        return SetInputDescriptor{input_from_json(member(j, "input", path), path + "/input")};
    }
    if (kind == "set_loss") {
        const json& loss = member(j, "loss", path);
        try {
            return SetLoss{parse_loss(loss.is_string() ? loss.get<std::string>() : std::string())};
        } catch (const ConfigError& e) {
            throw ParseError(path + "/loss: " + e.what(), 0, path + "/loss");
        }
    }
    if (kind == "set_optimizer") {
        return SetOptimizer{optimizer_from_json(member(j, "optimizer", path), path + "/optimizer")};
    }
    throw ParseError(path + "/kind: unknown edit kind '" + kind + "'", 0, path + "/kind");
}

}  // namespace

std::string_view to_string(EditKind k) {
    switch (k) {
        case EditKind::add_layer: return "add_layer";
        case EditKind::remove_layer: return "remove_layer";
        case EditKind::move_layer: return "move_layer";
        case EditKind::set_param: return "set_param";
        case EditKind::set_input_descriptor: return "set_input_descriptor";
        case EditKind::set_loss: return "set_loss";
        case EditKind::set_optimizer: return "set_optimizer";
    }
    return "set_param";
}

EditPayload apply_payload(ModelSpec& spec, const EditPayload& payload) {
    return std::visit(
        [&](const auto& p) -> EditPayload {
            using P = std::decay_t<decltype(p)>;
            auto& layers = spec.layers;
            if constexpr (std::is_same_v<P, AddLayer>) {
                check_index(p.index, layers.size() + 1, "insert");
                LayerSpec layer = p.layer;
                bool taken = false;
                for (const auto& l : layers) {
                    taken = taken || l.id == layer.id;
                }
                if (layer.id == 0 || taken) {
                    layer.id = next_layer_id(spec);
                }
                layers.insert(layers.begin() + static_cast<std::ptrdiff_t>(p.index), std::move(layer));
                return RemoveLayer{p.index};
            } else if constexpr (std::is_same_v<P, RemoveLayer>) {
                check_index(p.index, layers.size(), "remove");
                AddLayer inverse{p.index, layers[p.index]};
                layers.erase(layers.begin() + static_cast<std::ptrdiff_t>(p.index));
                return inverse;
            } else if constexpr (std::is_same_v<P, MoveLayer>) {
                check_index(p.from, layers.size(), "move source");
                check_index(p.to, layers.size(), "move target");
                LayerSpec layer = std::move(layers[p.from]);
                layers.erase(layers.begin() + static_cast<std::ptrdiff_t>(p.from));
                layers.insert(layers.begin() + static_cast<std::ptrdiff_t>(p.to), std::move(layer));
                return MoveLayer{p.to, p.from};
            } else if constexpr (std::is_same_v<P, SetParam>) {
                check_index(p.index, layers.size(), "layer");
                LayerSpec& layer = layers[p.index];
                json params = params_to_json(layer.params);
                if (!params.contains(p.field)) {
                    throw ConfigError("layer " + std::to_string(p.index) + " (" + std::string(to_string(layer.kind())) +
                                      ") has no parameter '" + p.field + "'");
                }
                SetParam inverse{p.index, p.field, params.at(p.field)};
                params[p.field] = p.value;
                try {
                    layer.params = params_from_json(layer.kind(), params, "layers/" + std::to_string(p.index) + "/params");
                } catch (const ParseError& e) {
                    throw ConfigError(e.what());
                }
                return inverse;
            } else if constexpr (std::is_same_v<P, SetInputDescriptor>) {
                SetInputDescriptor inverse{spec.input};
                spec.input = p.input;
                return inverse;
            } else if constexpr (std::is_same_v<P, SetLoss>) {
                SetLoss inverse{spec.loss};
                spec.loss = p.loss;
                return inverse;
            } else {
                SetOptimizer inverse{spec.optimizer};
                spec.optimizer = p.optimizer;
                return inverse;
            }
        },
        payload);
}

json to_json(const EditOp& op) {
    json j = payload_to_json(op.payload);
    if (op.inverse) {
        j["inverse"] = payload_to_json(*op.inverse);
    }
    return j;
}

EditOp edit_from_json(const json& j) {
    EditOp op;
    json body = j;
    if (body.is_object() && body.contains("inverse")) {
        op.inverse = payload_from_json(body.at("inverse"), "inverse");
        body.erase("inverse");
    }
    op.payload = payload_from_json(body, "edit");
    return op;
}

void UndoHistory::record(std::vector<EditOp> group) {
    if (group.empty()) {
        return;
    }
    undo_.push_back(std::move(group));
    redo_.clear();
}

std::optional<ModelSpec> UndoHistory::undo(const ModelSpec& current) {
    if (undo_.empty()) {
        return std::nullopt;
    }
    ModelSpec spec = current;
    const auto& group = undo_.back();
    for (auto it = group.rbegin(); it != group.rend(); ++it) {
        if (!it->inverse) {
            throw ContractError("undo log entry without inverse");
        }
        apply_payload(spec, *it->inverse);
    }
    redo_.push_back(group);
    undo_.pop_back();
    return spec;
}

std::optional<ModelSpec> UndoHistory::redo(const ModelSpec& current) {
    if (redo_.empty()) {
        return std::nullopt;
    }
    ModelSpec spec = current;
    for (const auto& op : redo_.back()) {
        apply_payload(spec, op.payload);
    }
    undo_.push_back(std::move(redo_.back()));
    redo_.pop_back();
    return spec;
}

void UndoHistory::clear() {
    undo_.clear();
    redo_.clear();
}

}  // namespace mlwb
