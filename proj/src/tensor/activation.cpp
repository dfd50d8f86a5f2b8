#include "mlwb/tensor/activation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mlwb {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::elu: return "elu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::softmax: return "softmax";
    }
    return "linear";
}

Activation parse_activation(std::string_view name) {
    for (Activation a : {Activation::linear, Activation::relu, Activation::elu, Activation::sigmoid,
                         Activation::tanh, Activation::softmax}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

template <typename T>
T clamp_open_unit(double v) {
    // Keep sigmoid strictly inside (0, 1) after rounding to T.
    constexpr T lo = std::numeric_limits<T>::min();
    constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / T{2};
    return std::clamp(static_cast<T>(v), lo, hi);
}

template <typename T>
void softmax_rows(const BasicTensor<T>& x, std::vector<T>& out) {
    if (x.rank() == 0) {
        throw ShapeError("softmax needs rank >= 1");
    }
    const std::size_t width = x.shape().back();
    const std::size_t rows = x.size() / width;
    const auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = in.data() + r * width;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < width; ++i) {
            m = std::max(m, static_cast<double>(row[i]));
        }
        double total = 0.0;
        std::vector<double> e(width);
        for (std::size_t i = 0; i < width; ++i) {
            e[i] = std::exp(static_cast<double>(row[i]) - m);
            total += e[i];
        }
        for (std::size_t i = 0; i < width; ++i) {
            out[r * width + i] = static_cast<T>(e[i] / total);
        }
    }
}

}  // namespace

template <typename T>
BasicTensor<T> apply_activation(const ActivationKind& kind, const BasicTensor<T>& x) {
    std::vector<T> out(x.size());
    const auto in = x.data();
    switch (kind.name) {
        case Activation::linear:
            return x;
        case Activation::relu:
            for (std::size_t i = 0; i < in.size(); ++i) {
                out[i] = in[i] > T{0} ? in[i] : T{0};
            }
            break;
        case Activation::elu:
            for (std::size_t i = 0; i < in.size(); ++i) {
                out[i] = in[i] > T{0} ? in[i]
                                      : static_cast<T>(kind.alpha * std::expm1(static_cast<double>(in[i])));
            }
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < in.size(); ++i) {
                out[i] = clamp_open_unit<T>(1.0 / (1.0 + std::exp(-static_cast<double>(in[i]))));
            }
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < in.size(); ++i) {
                out[i] = static_cast<T>(std::tanh(static_cast<double>(in[i])));
            }
            break;
        case Activation::softmax:
            softmax_rows(x, out);
            break;
    }
    return BasicTensor<T>(x.shape(), std::move(out));
}

template <typename T>
BasicTensor<T> activation_backward(const ActivationKind& kind, const BasicTensor<T>& x, const BasicTensor<T>& y,
                                   const BasicTensor<T>& grad_y) {
    std::vector<T> out(x.size());
    const auto xs = x.data();
    const auto ys = y.data();
    const auto gs = grad_y.data();
    switch (kind.name) {
        case Activation::linear:
            return grad_y;
        case Activation::relu:
            for (std::size_t i = 0; i < xs.size(); ++i) {
                out[i] = xs[i] > T{0} ? gs[i] : T{0};
            }
            break;
        case Activation::elu:
            for (std::size_t i = 0; i < xs.size(); ++i) {
                out[i] = xs[i] > T{0} ? gs[i] : static_cast<T>(gs[i] * (ys[i] + kind.alpha));
            }
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double s = ys[i];
                out[i] = static_cast<T>(gs[i] * s * (1.0 - s));
            }
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double t = ys[i];
                out[i] = static_cast<T>(gs[i] * (1.0 - t * t));
            }
            break;
        case Activation::softmax: {
            const std::size_t width = x.shape().back();
            const std::size_t rows = x.size() / width;
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t i = 0; i < width; ++i) {
                    dot += static_cast<double>(gs[r * width + i]) * ys[r * width + i];
                }
                for (std::size_t i = 0; i < width; ++i) {
                    out[r * width + i] = static_cast<T>(ys[r * width + i] * (gs[r * width + i] - dot));
                }
            }
            break;
        }
    }
    return BasicTensor<T>(x.shape(), std::move(out));
}

template BasicTensor<float> apply_activation(const ActivationKind&, const BasicTensor<float>&);
template BasicTensor<double> apply_activation(const ActivationKind&, const BasicTensor<double>&);
template BasicTensor<float> activation_backward(const ActivationKind&, const BasicTensor<float>&,
                                                const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> activation_backward(const ActivationKind&, const BasicTensor<double>&,
                                                 const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace mlwb
