#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlwb/model/compiled.hpp"

namespace mlwb {

constexpr int kModelFormatVersion = 1;

// JSON forms shared by the model file, edit payloads and the service API.
// Readers are strict: unknown keys and wrong types raise ParseError whose
// path() names the offending element (e.g. "layers/2/params/units").

nlohmann::json to_json(const ActivationKind& a);
nlohmann::json to_json(const InitializerKind& i);
nlohmann::json to_json(const Regularizer& r);
nlohmann::json to_json(const LayerSpec& layer);
nlohmann::json to_json(const InputDescriptor& input);
nlohmann::json to_json(const OptimizerSpec& optimizer);
nlohmann::json to_json(const ModelSpec& spec);
nlohmann::json params_to_json(const LayerParams& params);

ActivationKind activation_from_json(const nlohmann::json& j, const std::string& path);
LayerSpec layer_from_json(const nlohmann::json& j, const std::string& path);
LayerParams params_from_json(LayerKind kind, const nlohmann::json& j, const std::string& path);
InputDescriptor input_from_json(const nlohmann::json& j, const std::string& path);
OptimizerSpec optimizer_from_json(const nlohmann::json& j, const std::string& path);
ModelSpec spec_from_json(const nlohmann::json& j, const std::string& path = "");

/// {"shape": [...], "data": [...]}; non-finite values are written as the
/// strings "nan", "inf" and "-inf".
nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j, const std::string& path);

std::string save_model(const CompiledModel& model);
/// Architecture only (empty "weights").
std::string save_model(const ModelSpec& spec);

struct LoadedModel {
    ModelSpec spec;
    /// One entry per layer; empty when the file carries no weights.
    std::vector<std::vector<Tensor>> weights;
};

/// Throws ParseError (byte offset for syntax errors, path for structural ones).
LoadedModel load_model(std::string_view bytes);

/// load_model followed by compile or compile_with_weights.
CompiledModel load_compiled(std::string_view bytes, std::uint64_t seed = 0);

}  // namespace mlwb
