#pragma once

// Loop-based GradCAM for conv -> [2x2 max-pool] -> flatten -> dense nets, with
// the class-score gradient taken by central finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "oracles/finite_difference.hpp"
#include "oracles/naive.hpp"

namespace oracle {

struct TinyConvNet {
    std::size_t h = 4, w = 4, c = 1;
    std::size_t kh = 3, kw = 3, f = 2;
    bool same = false;
    std::string activation = "linear";  // linear, relu or tanh
    bool pool = false;                  // 2x2, stride 2, valid
    std::size_t classes = 2;
    std::vector<double> kernel;        // [kh,kw,c,f]
    std::vector<double> conv_bias;     // [f]
    std::vector<double> dense_kernel;  // [flat, classes]
    std::vector<double> dense_bias;    // [classes]
};

inline double act(const std::string& name, double v) {
    if (name == "relu") {
        return std::max(v, 0.0);
    }
    if (name == "tanh") {
        return std::tanh(v);
    }
    return v;
}

/// Post-activation conv output [oh, ow, f].
inline std::vector<double> conv_activation(const TinyConvNet& net, const std::vector<double>& x, std::size_t& oh,
                                           std::size_t& ow) {
    std::vector<double> a = conv2d(x, net.h, net.w, net.c, net.kernel, net.kh, net.kw, net.f, 1, net.same, oh, ow);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = act(net.activation, a[i] + net.conv_bias[i % net.f]);
    }
    return a;
}

/// Logit of `cls` as a function of the conv activation.
inline double class_logit(const TinyConvNet& net, const std::vector<double>& a, std::size_t oh, std::size_t ow,
                          std::size_t cls) {
    std::vector<double> flat;
    if (net.pool) {
        const std::size_t ph = oh / 2, pw = ow / 2;
        for (std::size_t y = 0; y < ph; ++y) {
            for (std::size_t x = 0; x < pw; ++x) {
                for (std::size_t k = 0; k < net.f; ++k) {
                    double m = -INFINITY;
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            m = std::max(m, a[((2 * y + dy) * ow + 2 * x + dx) * net.f + k]);
                        }
                    }
                    flat.push_back(m);
                }
            }
        }
    } else {
        flat = a;
    }
    double s = net.dense_bias[cls];
    for (std::size_t i = 0; i < flat.size(); ++i) {
        s += flat[i] * net.dense_kernel[i * net.classes + cls];
    }
    return s;
}

inline std::vector<double> bilinear(const std::vector<double>& m, std::size_t h, std::size_t w, std::size_t oh,
                                    std::size_t ow) {
    std::vector<double> out(oh * ow);
    for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
            double sy = (i + 0.5) * static_cast<double>(h) / oh - 0.5;
            double sx = (j + 0.5) * static_cast<double>(w) / ow - 0.5;
            sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
            sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
            const std::size_t y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
            const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            const double fy = sy - y0, fx = sx - x0;
            out[i * ow + j] = (1 - fy) * (1 - fx) * m[y0 * w + x0] + (1 - fy) * fx * m[y0 * w + x1] +
                              fy * (1 - fx) * m[y1 * w + x0] + fy * fx * m[y1 * w + x1];
        }
    }
    return out;
}

/// Normalized [h, w] heatmap.
inline std::vector<double> gradcam(const TinyConvNet& net, const std::vector<double>& x, std::size_t cls) {
    std::size_t oh = 0, ow = 0;
    const std::vector<double> a = conv_activation(net, x, oh, ow);
    const auto grad = central_difference([&](const std::vector<double>& v) { return class_logit(net, v, oh, ow, cls); },
                                         a, 1e-3);
    std::vector<double> weight(net.f, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        weight[i % net.f] += grad[i] / static_cast<double>(oh * ow);
    }
    std::vector<double> cam(oh * ow, 0.0);
    for (std::size_t p = 0; p < oh * ow; ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < net.f; ++k) {
            s += weight[k] * a[p * net.f + k];
        }
        cam[p] = std::max(s, 0.0);
    }
    std::vector<double> up = bilinear(cam, oh, ow, net.h, net.w);
    const double lo = *std::min_element(up.begin(), up.end());
    const double hi = *std::max_element(up.begin(), up.end());
    for (double& v : up) {
        v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    }
    return up;
}

}  // namespace oracle
