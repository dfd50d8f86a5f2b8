#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "mlwb/tensor/tensor.hpp"

namespace mlwb {

enum class Padding { valid, same };

std::string_view to_string(Padding p);
Padding parse_padding(std::string_view name);

/// Output length of a sliding window along one axis. Throws ShapeError when a
/// valid-padded window does not fit.
std::size_t window_output_size(std::size_t input, std::size_t window, std::size_t stride, Padding padding);

/// Leading padding for "same" (total padding split with the extra cell at the end).
std::size_t same_padding_before(std::size_t input, std::size_t window, std::size_t stride);

// All kernels accumulate in double and round once per output element.

/// [m,k] x [k,n] -> [m,n].
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

/// Adds a rank-1 bias along the last axis of x.
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);

/// Cross-correlation (no kernel flip). Input [h,w,c] or batched [n,h,w,c];
/// kernels [kh,kw,c,f]. Output keeps the input's batching.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, std::size_t stride,
                      Padding padding);

/// Gradients of conv2d for batched input [n,h,w,c].
template <typename T>
BasicTensor<T> conv2d_input_grad(const Shape& input_shape, const BasicTensor<T>& kernels,
                                 const BasicTensor<T>& grad_out, std::size_t stride, Padding padding);
template <typename T>
BasicTensor<T> conv2d_kernel_grad(const BasicTensor<T>& input, const Shape& kernel_shape,
                                  const BasicTensor<T>& grad_out, std::size_t stride, Padding padding);

/// Max pooling over batched [n,h,w,c]. `argmax` (if non-null) receives, per output
/// element, the flat input index that won.
template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, std::size_t pool_h, std::size_t pool_w,
                          std::size_t stride, Padding padding, std::vector<std::size_t>* argmax = nullptr);

/// Inference-time batch normalization along the last axis.
template <typename T>
BasicTensor<T> batch_norm_inference(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                    const BasicTensor<T>& beta, const BasicTensor<T>& mean,
                                    const BasicTensor<T>& variance, double epsilon);

/// Per-channel (last axis) mean and biased variance over all other axes.
template <typename T>
void channel_moments(const BasicTensor<T>& x, BasicTensor<T>& mean, BasicTensor<T>& variance);

/// Mean of squared differences over all elements.
template <typename T>
T mse_value(const BasicTensor<T>& target, const BasicTensor<T>& prediction);

constexpr double kCrossentropyEpsilon = 1e-7;

/// Mean over rows (all leading axes) of -sum(y * log(clip(p, eps, 1-eps))) along the last axis.
template <typename T>
T categorical_crossentropy_value(const BasicTensor<T>& target, const BasicTensor<T>& prediction);

}  // namespace mlwb
