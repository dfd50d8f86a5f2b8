#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mlwb/model/model_spec.hpp"

namespace mlwb {

/// Shape error attributed to one layer of a model.
class LayerShapeError : public ShapeError {
public:
    LayerShapeError(std::size_t layer, const std::string& message)
        : ShapeError("layer " + std::to_string(layer) + ": " + message), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

/// Per-sample shapes (no batch dimension).
struct LayerShapes {
    Shape input;
    Shape output;

    bool operator==(const LayerShapes&) const = default;
};

/// Output shape of one layer for a per-sample input shape. Throws ShapeError
/// when the input is incompatible and ConfigError for out-of-range params.
Shape layer_output_shape(const LayerSpec& layer, const Shape& input);

/// Weight tensor shapes in storage order (dense/conv: kernel, bias?; batch_norm:
/// gamma, beta, moving_mean, moving_variance). Empty for weightless layers.
std::vector<Shape> weight_shapes(const LayerSpec& layer, const Shape& input);

std::vector<std::string> weight_names(const LayerSpec& layer);

/// Propagates shapes from the input descriptor; throws LayerShapeError naming
/// the first failing layer.
std::vector<LayerShapes> infer_shapes(const ModelSpec& spec);

struct ShapeTrace {
    std::vector<LayerShapes> layers;  // successfully inferred prefix
    std::optional<std::size_t> failed_layer;
    std::string message;

    bool ok() const noexcept { return !failed_layer && message.empty(); }
};

/// Non-throwing variant; stops at the first failure.
ShapeTrace trace_shapes(const ModelSpec& spec);

}  // namespace mlwb
