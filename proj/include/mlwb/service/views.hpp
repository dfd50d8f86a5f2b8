#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlwb/data/dataset.hpp"
#include "mlwb/model/compiled.hpp"

namespace mlwb {

// Request/response helpers shared by the HTTP routes and the CLI. Requests are
// JSON objects; unknown keys raise ParseError.

std::string base64_encode(std::string_view bytes);

/// Decodes an uploaded PNG/JPEG and fits it to the model's image input:
/// resized to height x width, channels averaged to 1 when the model wants one.
Tensor image_for_model(const CompiledModel& model, const std::vector<std::uint8_t>& bytes);

/// Input tensor named by a request: {"input": "<tensor literal>"} or
/// {"sample": k} (row k of the data set).
Tensor request_input(const nlohmann::json& request, const Dataset* dataset);

/// {format_version, shape, output, literal}
nlohmann::json predict_view(const CompiledModel& model, const Tensor& input);

/// {"layer", "unit", "steps"?, "step_size"?, "seed"?, "bounds"?: [lo, hi]}
/// -> {trace, converged, input, png?}; png (base64) for [h, w, 1|3] inputs.
nlohmann::json featuremap_view(const CompiledModel& model, const nlohmann::json& request);

/// {"class_index", "conv_layer"?} plus an input -> {heatmap, png, class_index, conv_layer}.
nlohmann::json gradcam_view(const CompiledModel& model, const Tensor& input, const nlohmann::json& request);

nlohmann::json layerio_view(const CompiledModel& model, const Tensor& input);

/// {eligible, reason?, text?, latex?, equations?, deltas?}. Deltas color every
/// weight against `previous` when it has the same weight shapes.
nlohmann::json mathmode_view(const CompiledModel& model, const CompiledModel* previous);

/// PNG bytes of a feature-map input: min-max scaled to [0, 1].
std::vector<std::uint8_t> feature_png(const Tensor& image);

}  // namespace mlwb
