#include "mlwb/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mlwb {

std::string_view to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

Padding parse_padding(std::string_view name) {
    if (name == "valid") {
        return Padding::valid;
    }
    if (name == "same") {
        return Padding::same;
    }
    throw ConfigError("unknown padding '" + std::string(name) + "'");
}

std::size_t window_output_size(std::size_t input, std::size_t window, std::size_t stride, Padding padding) {
    if (stride == 0 || window == 0) {
        throw ShapeError("window and stride must be positive");
    }
    if (padding == Padding::same) {
        return (input + stride - 1) / stride;
    }
    if (window > input) {
        throw ShapeError("window of size " + std::to_string(window) + " does not fit input of size " +
                         std::to_string(input));
    }
    return (input - window) / stride + 1;
}

std::size_t same_padding_before(std::size_t input, std::size_t window, std::size_t stride) {
    const std::size_t out = (input + stride - 1) / stride;
    const std::size_t needed = (out - 1) * stride + window;
    const std::size_t total = needed > input ? needed - input : 0;
    return total / 2;
}

namespace {

struct Geometry {
    std::size_t n, h, w, c;
    std::size_t kh, kw;
    std::size_t oh, ow;
    std::size_t pad_top, pad_left;
    std::size_t stride;
};

Geometry make_geometry(const Shape& in, std::size_t kh, std::size_t kw, std::size_t stride, Padding padding) {
    if (in.size() != 4) {
        throw ShapeError("expected batched image input [n,h,w,c], got " + to_string(in));
    }
    Geometry g{in[0], in[1], in[2], in[3], kh, kw, 0, 0, 0, 0, stride};
    g.oh = window_output_size(g.h, kh, stride, padding);
    g.ow = window_output_size(g.w, kw, stride, padding);
    if (padding == Padding::same) {
        g.pad_top = same_padding_before(g.h, kh, stride);
        g.pad_left = same_padding_before(g.w, kw, stride);
    }
    return g;
}

// Maps an output coordinate plus kernel offset to an input coordinate; false when it lands in padding.
inline bool source_index(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad, std::size_t limit,
                         std::size_t& out) {
    const std::size_t pos = o * stride + k;
    if (pos < pad) {
        return false;
    }
    out = pos - pad;
    return out < limit;
}

template <typename T>
BasicTensor<T> to_batched(const BasicTensor<T>& x) {
    if (x.rank() == 3) {
        Shape s{1, x.dim(0), x.dim(1), x.dim(2)};
        return x.reshaped(std::move(s));
    }
    return x;
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul shape mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(m * n);
    std::vector<double> acc(n);
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const T* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                acc[j] += aip * static_cast<double>(brow[j]);
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = static_cast<T>(acc[j]);
        }
    }
    return BasicTensor<T>(Shape{m, n}, std::move(out));
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    if (a.rank() != 2) {
        throw ShapeError("transpose needs rank 2, got " + to_string(a.shape()));
    }
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = a[i * n + j];
        }
    }
    return BasicTensor<T>(Shape{n, m}, std::move(out));
}

template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
    if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
        throw ShapeError("bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
    }
    std::vector<T> out(x.values());
    const std::size_t width = bias.dim(0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<T>(static_cast<double>(out[i]) + static_cast<double>(bias[i % width]));
    }
    return BasicTensor<T>(x.shape(), std::move(out));
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, std::size_t stride,
                      Padding padding) {
    if (input.rank() != 3 && input.rank() != 4) {
        throw ShapeError("conv2d input must be [h,w,c] or [n,h,w,c], got " + to_string(input.shape()));
    }
    if (kernels.rank() != 4) {
        throw ShapeError("conv2d kernels must be [kh,kw,c,f], got " + to_string(kernels.shape()));
    }
    const bool unbatched = input.rank() == 3;
    const BasicTensor<T> x = to_batched(input);
    if (kernels.dim(2) != x.dim(3)) {
        throw ShapeError("conv2d channel mismatch: input " + to_string(input.shape()) + ", kernels " +
                         to_string(kernels.shape()));
    }
    Geometry g;
    try {
        g = make_geometry(x.shape(), kernels.dim(0), kernels.dim(1), stride, padding);
    } catch (const ShapeError&) {
        throw ShapeError("conv2d kernel " + to_string(kernels.shape()) + " larger than input " +
                         to_string(input.shape()));
    }
    const std::size_t f = kernels.dim(3);
    std::vector<T> out(g.n * g.oh * g.ow * f);
    std::vector<double> acc(f);
    const auto xv = x.data();
    const auto kv = kernels.data();
    for (std::size_t b = 0; b < g.n; ++b) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                std::fill(acc.begin(), acc.end(), 0.0);
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    std::size_t iy;
                    if (!source_index(oy, ky, stride, g.pad_top, g.h, iy)) {
                        continue;
                    }
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        std::size_t ix;
                        if (!source_index(ox, kx, stride, g.pad_left, g.w, ix)) {
                            continue;
                        }
                        const T* px = xv.data() + ((b * g.h + iy) * g.w + ix) * g.c;
                        const T* pk = kv.data() + (ky * g.kw + kx) * g.c * f;
                        for (std::size_t ch = 0; ch < g.c; ++ch) {
                            const double v = px[ch];
                            const T* krow = pk + ch * f;
                            for (std::size_t o = 0; o < f; ++o) {
                                acc[o] += v * static_cast<double>(krow[o]);
                            }
                        }
                    }
                }
                T* dst = out.data() + ((b * g.oh + oy) * g.ow + ox) * f;
                for (std::size_t o = 0; o < f; ++o) {
                    dst[o] = static_cast<T>(acc[o]);
                }
            }
        }
    }
    Shape shape = unbatched ? Shape{g.oh, g.ow, f} : Shape{g.n, g.oh, g.ow, f};
    return BasicTensor<T>(std::move(shape), std::move(out));
}

template <typename T>
BasicTensor<T> conv2d_input_grad(const Shape& input_shape, const BasicTensor<T>& kernels,
                                 const BasicTensor<T>& grad_out, std::size_t stride, Padding padding) {
    const Geometry g = make_geometry(input_shape, kernels.dim(0), kernels.dim(1), stride, padding);
    const std::size_t f = kernels.dim(3);
    std::vector<double> acc(element_count(input_shape), 0.0);
    const auto kv = kernels.data();
    const auto gv = grad_out.data();
    for (std::size_t b = 0; b < g.n; ++b) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const T* go = gv.data() + ((b * g.oh + oy) * g.ow + ox) * f;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    std::size_t iy;
                    if (!source_index(oy, ky, stride, g.pad_top, g.h, iy)) {
                        continue;
                    }
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        std::size_t ix;
                        if (!source_index(ox, kx, stride, g.pad_left, g.w, ix)) {
                            continue;
                        }
                        double* dst = acc.data() + ((b * g.h + iy) * g.w + ix) * g.c;
                        const T* pk = kv.data() + (ky * g.kw + kx) * g.c * f;
                        for (std::size_t ch = 0; ch < g.c; ++ch) {
                            double s = 0.0;
                            const T* krow = pk + ch * f;
                            for (std::size_t o = 0; o < f; ++o) {
                                s += static_cast<double>(krow[o]) * static_cast<double>(go[o]);
                            }
                            dst[ch] += s;
                        }
                    }
                }
            }
        }
    }
    return BasicTensor<T>(input_shape, std::vector<T>(acc.begin(), acc.end()));
}

template <typename T>
BasicTensor<T> conv2d_kernel_grad(const BasicTensor<T>& input, const Shape& kernel_shape,
                                  const BasicTensor<T>& grad_out, std::size_t stride, Padding padding) {
    const Geometry g = make_geometry(input.shape(), kernel_shape[0], kernel_shape[1], stride, padding);
    const std::size_t f = kernel_shape[3];
    std::vector<double> acc(element_count(kernel_shape), 0.0);
    const auto xv = input.data();
    const auto gv = grad_out.data();
    for (std::size_t b = 0; b < g.n; ++b) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const T* go = gv.data() + ((b * g.oh + oy) * g.ow + ox) * f;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    std::size_t iy;
                    if (!source_index(oy, ky, stride, g.pad_top, g.h, iy)) {
                        continue;
                    }
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        std::size_t ix;
                        if (!source_index(ox, kx, stride, g.pad_left, g.w, ix)) {
                            continue;
                        }
                        const T* px = xv.data() + ((b * g.h + iy) * g.w + ix) * g.c;
                        double* dst = acc.data() + (ky * g.kw + kx) * g.c * f;
                        for (std::size_t ch = 0; ch < g.c; ++ch) {
                            const double v = px[ch];
                            for (std::size_t o = 0; o < f; ++o) {
                                dst[ch * f + o] += v * static_cast<double>(go[o]);
                            }
                        }
                    }
                }
            }
        }
    }
    return BasicTensor<T>(kernel_shape, std::vector<T>(acc.begin(), acc.end()));
}

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, std::size_t pool_h, std::size_t pool_w, std::size_t stride,
                          Padding padding, std::vector<std::size_t>* argmax) {
    const Geometry g = make_geometry(input.shape(), pool_h, pool_w, stride, padding);
    std::vector<T> out(g.n * g.oh * g.ow * g.c);
    if (argmax) {
        argmax->assign(out.size(), 0);
    }
    const auto xv = input.data();
    for (std::size_t b = 0; b < g.n; ++b) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                for (std::size_t ch = 0; ch < g.c; ++ch) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_idx = 0;
                    bool found = false;
                    for (std::size_t ky = 0; ky < g.kh; ++ky) {
                        std::size_t iy;
                        if (!source_index(oy, ky, stride, g.pad_top, g.h, iy)) {
                            continue;
                        }
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            std::size_t ix;
                            if (!source_index(ox, kx, stride, g.pad_left, g.w, ix)) {
                                continue;
                            }
                            const std::size_t idx = ((b * g.h + iy) * g.w + ix) * g.c + ch;
                            if (!found || xv[idx] > best) {
                                best = xv[idx];
                                best_idx = idx;
                                found = true;
                            }
                        }
                    }
                    const std::size_t o = ((b * g.oh + oy) * g.ow + ox) * g.c + ch;
                    out[o] = best;
                    if (argmax) {
                        (*argmax)[o] = best_idx;
                    }
                }
            }
        }
    }
    return BasicTensor<T>(Shape{g.n, g.oh, g.ow, g.c}, std::move(out));
}

template <typename T>
BasicTensor<T> batch_norm_inference(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                    const BasicTensor<T>& mean, const BasicTensor<T>& variance, double epsilon) {
    if (x.rank() == 0) {
        throw ShapeError("batch_norm needs rank >= 1");
    }
    const std::size_t c = x.shape().back();
    for (const auto* p : {&gamma, &beta, &mean, &variance}) {
        if (p->rank() != 1 || p->dim(0) != c) {
            throw ShapeError("batch_norm parameter " + to_string(p->shape()) + " does not match " +
                             to_string(x.shape()));
        }
    }
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t ch = i % c;
        const double inv = 1.0 / std::sqrt(static_cast<double>(variance[ch]) + epsilon);
        out[i] = static_cast<T>(static_cast<double>(gamma[ch]) * (static_cast<double>(x[i]) - mean[ch]) * inv +
                                static_cast<double>(beta[ch]));
    }
    return BasicTensor<T>(x.shape(), std::move(out));
}

template <typename T>
void channel_moments(const BasicTensor<T>& x, BasicTensor<T>& mean, BasicTensor<T>& variance) {
    if (x.rank() == 0) {
        throw ShapeError("channel_moments needs rank >= 1");
    }
    const std::size_t c = x.shape().back();
    const std::size_t rows = x.size() / c;
    std::vector<double> m(c, 0.0), v(c, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        m[i % c] += x[i];
    }
    for (auto& e : m) {
        e /= static_cast<double>(rows);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - m[i % c];
        v[i % c] += d * d;
    }
    for (auto& e : v) {
        e /= static_cast<double>(rows);
    }
    mean = BasicTensor<T>(Shape{c}, std::vector<T>(m.begin(), m.end()));
    variance = BasicTensor<T>(Shape{c}, std::vector<T>(v.begin(), v.end()));
}

template <typename T>
T mse_value(const BasicTensor<T>& target, const BasicTensor<T>& prediction) {
    if (target.shape() != prediction.shape()) {
        throw ShapeError("mse shape mismatch: " + to_string(target.shape()) + " vs " +
                         to_string(prediction.shape()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = static_cast<double>(target[i]) - static_cast<double>(prediction[i]);
        total += d * d;
    }
    return static_cast<T>(total / static_cast<double>(target.size()));
}

template <typename T>
T categorical_crossentropy_value(const BasicTensor<T>& target, const BasicTensor<T>& prediction) {
    if (target.shape() != prediction.shape() || target.rank() == 0) {
        throw ShapeError("categorical_crossentropy shape mismatch: " + to_string(target.shape()) + " vs " +
                         to_string(prediction.shape()));
    }
    const std::size_t width = target.shape().back();
    const std::size_t rows = target.size() / width;
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double p = std::clamp(static_cast<double>(prediction[i]), kCrossentropyEpsilon,
                                    1.0 - kCrossentropyEpsilon);
        total -= static_cast<double>(target[i]) * std::log(p);
    }
    return static_cast<T>(total / static_cast<double>(rows));
}

#define MLWB_INSTANTIATE_OPS(T)                                                                                   \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
    template BasicTensor<T> transpose(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, Padding);           \
    template BasicTensor<T> conv2d_input_grad(const Shape&, const BasicTensor<T>&, const BasicTensor<T>&,         \
                                              std::size_t, Padding);                                              \
    template BasicTensor<T> conv2d_kernel_grad(const BasicTensor<T>&, const Shape&, const BasicTensor<T>&,        \
                                               std::size_t, Padding);                                             \
    template BasicTensor<T> max_pool2d(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t, Padding,     \
                                       std::vector<std::size_t>*);                                                \
    template BasicTensor<T> batch_norm_inference(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                                 const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                                 const BasicTensor<T>&, double);                                  \
    template void channel_moments(const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&);                       \
    template T mse_value(const BasicTensor<T>&, const BasicTensor<T>&);                                           \
    template T categorical_crossentropy_value(const BasicTensor<T>&, const BasicTensor<T>&);

MLWB_INSTANTIATE_OPS(float)
MLWB_INSTANTIATE_OPS(double)

#undef MLWB_INSTANTIATE_OPS

}  // namespace mlwb
