#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mlwb/model/compiled.hpp"
#include "mlwb/tensor/autodiff.hpp"

namespace mlwb {

struct ForwardOptions {
    /// Dropout and noise active, batch norm uses batch statistics.
    bool training = false;
    /// Seed for dropout masks and noise; layer index is mixed in per layer.
    std::uint64_t seed = 0;
};

/// A model's forward pass recorded on a differentiable graph for one batch.
template <typename T>
struct ForwardGraph {
    BasicGraph<T> graph;
    Var input;
    /// Leaf per weight tensor, in CompiledLayer::weights order.
    std::vector<std::vector<Var>> weights;
    std::vector<Var> layer_inputs;
    std::vector<Var> layer_outputs;
    /// Dense/conv2d output before the activation (the logits for a softmax head).
    std::vector<std::optional<Var>> pre_activations;
    /// Batch-norm layers normalized with batch statistics in this pass.
    std::vector<bool> batch_statistics;
    Var output;
};

/// `input` is batched: [n, ...model input shape].
template <typename T>
ForwardGraph<T> build_forward(const CompiledModel& model, const BasicTensor<T>& input, const ForwardOptions& options = {});

extern template ForwardGraph<float> build_forward(const CompiledModel&, const Tensor&, const ForwardOptions&);
extern template ForwardGraph<double> build_forward(const CompiledModel&, const Tensor64&, const ForwardOptions&);

/// Returns `input` with a leading batch axis of 1 when it has exactly the model's
/// per-sample shape; otherwise it must already be [n, ...]. ShapeError names the
/// expected and given shapes. `added` reports whether an axis was inserted.
Tensor as_batch(const CompiledModel& model, const Tensor& input, bool* added = nullptr);

/// Inference (dropout and noise pass through, batch norm uses moving statistics).
/// The batch axis is stripped again when as_batch() had to add it.
Tensor predict(const CompiledModel& model, const Tensor& input);

}  // namespace mlwb
