#pragma once

#include <string>
#include <string_view>

#include "mlwb/tensor/tensor.hpp"

namespace mlwb {

enum class Activation { linear, relu, elu, sigmoid, tanh, softmax };

/// `alpha` only matters for elu.
struct ActivationKind {
    Activation name = Activation::linear;
    double alpha = 1.0;

    bool operator==(const ActivationKind&) const = default;
};

std::string_view to_string(Activation a);

/// Throws ConfigError for unknown names.
Activation parse_activation(std::string_view name);

/// Elementwise transform; softmax is applied along the last axis.
template <typename T>
BasicTensor<T> apply_activation(const ActivationKind& kind, const BasicTensor<T>& x);

/// Vector-Jacobian product: given input x, output y = act(x) and dL/dy, returns dL/dx.
template <typename T>
BasicTensor<T> activation_backward(const ActivationKind& kind, const BasicTensor<T>& x,
                                   const BasicTensor<T>& y, const BasicTensor<T>& grad_y);

}  // namespace mlwb
