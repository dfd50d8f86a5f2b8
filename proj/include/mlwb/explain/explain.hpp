#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mlwb/model/compiled.hpp"

namespace mlwb {

// ---- feature maps (activation maximization) ----

struct FeatureMapOptions {
    std::int64_t steps = 100;
    double step_size = 0.1;
    std::uint64_t seed = 0;
    /// Box constraint applied after every step. Unset means [0, 1] for image
    /// inputs and unconstrained otherwise.
    std::optional<std::pair<float, float>> bounds;
};

struct FeatureMapResult {
    /// Per-sample input shape (no batch axis).
    Tensor input;
    /// Objective before the first step, then after every step (steps + 1 values).
    std::vector<double> trace;
    std::size_t layer = 0;
    std::size_t unit = 0;
    /// Final objective >= initial, and non-decreasing (within 1e-6) over the last 10% of steps.
    bool converged = false;
};

/// Gradient ascent on the input, weights frozen, maximizing the mean activation
/// of `unit` (index along the last axis) at the output of layer `layer`. Runs in
/// inference mode. ContractError for an invalid layer or unit.
FeatureMapResult feature_map(const CompiledModel& model, std::size_t layer, std::size_t unit,
                             const FeatureMapOptions& options = {});

// ---- GradCAM ----

struct Heatmap {
    /// [height, width], normalized to [0, 1]; a constant map becomes all zeros.
    Tensor values;
    Shape input_shape;
    std::size_t class_index = 0;
    std::size_t conv_layer = 0;
};

/// Index of the last conv2d layer; ContractError when there is none.
std::size_t last_conv_layer(const ModelSpec& spec);

/// Class score: the final layer's pre-activation (logit) when it is dense or
/// conv2d, else the model output. Channel weights are the spatial means of the
/// score gradient at the chosen conv layer's output; the relu of the weighted
/// channel sum is bilinearly resized to the input's height x width and min-max
/// normalized. `input` is one sample, with or without a batch axis of 1.
Heatmap gradcam(const CompiledModel& model, const Tensor& input, std::size_t class_index,
                std::optional<std::size_t> conv_layer = std::nullopt);

/// Bilinear resize of [h, w] with half-pixel centers (edge samples clamped).
Tensor resize_bilinear(const Tensor& map, std::size_t height, std::size_t width);

/// Min-max normalization to [0, 1]; a zero-range input yields zeros.
Tensor normalize_unit_range(const Tensor& t);

// ---- per-layer data flow ----

struct LayerIOEntry {
    std::size_t index = 0;
    LayerKind kind = LayerKind::dense;
    Tensor input;
    Tensor output;
    /// conv2d only: [kh, kw, c, f].
    std::optional<Tensor> kernels;
};

struct LayerIO {
    std::vector<LayerIOEntry> layers;
};

/// Inference pass recording every layer's input and output. The batch axis is
/// kept when `input` had one and omitted when it was a single sample.
LayerIO layer_io(const CompiledModel& model, const Tensor& input);

// ---- loss comparison ----

struct LossComparison {
    std::map<std::string, double> values;
    /// Loss name -> why it does not apply to these targets.
    std::map<std::string, std::string> omitted;
};

LossComparison loss_comparison(const Tensor& y, const Tensor& y_hat);

nlohmann::json to_json(const LossComparison& c);

}  // namespace mlwb
