#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "mlwb/tensor/activation.hpp"
#include "mlwb/tensor/initializer.hpp"
#include "mlwb/tensor/ops.hpp"

namespace mlwb {

enum class LayerKind { dense, conv2d, max_pool2d, flatten, reshape, dropout, activation, batch_norm, gaussian_noise };

std::string_view to_string(LayerKind k);
LayerKind parse_layer_kind(std::string_view name);

enum class LayerGroup { feature_detection, dimensionality, classification, regularization };

std::string_view to_string(LayerGroup g);
LayerGroup group_of(LayerKind k);

struct Regularizer {
    enum class Kind { none, l1, l2 };
    Kind kind = Kind::none;
    double lambda = 0.0;

    bool operator==(const Regularizer&) const = default;
};

std::string_view to_string(Regularizer::Kind k);

// Integer params are signed so that out-of-range user input (0, -3) can be held
// in a spec and reported by validate() instead of being rejected at parse time.

struct DenseParams {
    std::int64_t units = 8;
    ActivationKind activation{Activation::linear};
    bool use_bias = true;
    bool trainable = true;
    InitializerKind kernel_initializer{Initializer::glorot_uniform};
    InitializerKind bias_initializer{Initializer::zeros};
    Regularizer kernel_regularizer;
    Regularizer bias_regularizer;

    bool operator==(const DenseParams&) const = default;
};

struct Conv2dParams {
    std::int64_t filters = 8;
    std::array<std::int64_t, 2> kernel_size{3, 3};
    std::int64_t stride = 1;
    Padding padding = Padding::valid;
    ActivationKind activation{Activation::relu};
    bool use_bias = true;
    bool trainable = true;
    InitializerKind kernel_initializer{Initializer::glorot_uniform};
    InitializerKind bias_initializer{Initializer::zeros};
    Regularizer kernel_regularizer;
    Regularizer bias_regularizer;

    bool operator==(const Conv2dParams&) const = default;
};

struct MaxPool2dParams {
    std::array<std::int64_t, 2> pool_size{2, 2};
    std::int64_t stride = 2;
    Padding padding = Padding::valid;

    bool operator==(const MaxPool2dParams&) const = default;
};

struct FlattenParams {
    bool operator==(const FlattenParams&) const = default;
};

struct ReshapeParams {
    std::vector<std::int64_t> target_shape{1};

    bool operator==(const ReshapeParams&) const = default;
};

struct DropoutParams {
    double rate = 0.25;

    bool operator==(const DropoutParams&) const = default;
};

struct ActivationParams {
    ActivationKind activation{Activation::relu};

    bool operator==(const ActivationParams&) const = default;
};

struct BatchNormParams {
    double momentum = 0.99;
    double epsilon = 1e-3;
    bool trainable = true;

    bool operator==(const BatchNormParams&) const = default;
};

struct GaussianNoiseParams {
    double stddev = 0.1;

    bool operator==(const GaussianNoiseParams&) const = default;
};

/// Alternative order matches LayerKind.
using LayerParams = std::variant<DenseParams, Conv2dParams, MaxPool2dParams, FlattenParams, ReshapeParams,
                                 DropoutParams, ActivationParams, BatchNormParams, GaussianNoiseParams>;

/// One layer of a sequential model. `id` is a stable identity used to match
/// layers across edits when retaining weights; 0 means "not assigned yet".
struct LayerSpec {
    std::uint64_t id = 0;
    LayerParams params;

    LayerKind kind() const noexcept { return static_cast<LayerKind>(params.index()); }
    LayerGroup group() const noexcept { return group_of(kind()); }

    template <typename P>
    const P& as() const {
        return std::get<P>(params);
    }
    template <typename P>
    P& as() {
        return std::get<P>(params);
    }

    bool operator==(const LayerSpec&) const = default;
};

/// A layer of the given kind with default parameters.
LayerSpec default_layer(LayerKind kind);

LayerSpec dense_layer(std::int64_t units, Activation activation);

/// Whether the layer owns weight tensors.
bool has_weights(LayerKind kind);

/// Whether the layer behaves differently while training (dropout, noise, batch norm).
bool is_training_sensitive(LayerKind kind);

}  // namespace mlwb
