#pragma once

// Brute-force reference implementations used only by tests. They deliberately
// share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

struct Dense2 {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    return out;
}

/// Valid or same cross-correlation of one image [h,w,c] with kernels [kh,kw,c,f].
/// Padding for "same" follows the usual convention: total = max((out-1)*s + k - in, 0),
/// with floor(total/2) before.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t h, std::size_t w, std::size_t c,
                                  const std::vector<double>& k, std::size_t kh, std::size_t kw, std::size_t f,
                                  std::size_t stride, bool same, std::size_t& oh, std::size_t& ow) {
    long pad_t = 0, pad_l = 0;
    if (same) {
        oh = (h + stride - 1) / stride;
        ow = (w + stride - 1) / stride;
        const long th = std::max<long>(0, static_cast<long>((oh - 1) * stride + kh) - static_cast<long>(h));
        const long tw = std::max<long>(0, static_cast<long>((ow - 1) * stride + kw) - static_cast<long>(w));
        pad_t = th / 2;
        pad_l = tw / 2;
    } else {
        oh = (h - kh) / stride + 1;
        ow = (w - kw) / stride + 1;
    }
    std::vector<double> out(oh * ow * f, 0.0);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t o = 0; o < f; ++o) {
                double s = 0.0;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const long iy = static_cast<long>(oy * stride + ky) - pad_t;
                        const long ix = static_cast<long>(ox * stride + kx) - pad_l;
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) {
                            continue;
                        }
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            s += x[(iy * w + ix) * c + ch] * k[((ky * kw + kx) * c + ch) * f + o];
                        }
                    }
                }
                out[(oy * ow + ox) * f + o] = s;
            }
        }
    }
    return out;
}

inline double mse(const std::vector<double>& y, const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += (y[i] - p[i]) * (y[i] - p[i]);
    }
    return s / static_cast<double>(y.size());
}

inline double categorical_crossentropy(const std::vector<double>& y, const std::vector<double>& p, std::size_t width) {
    const double eps = 1e-7;
    const std::size_t rows = y.size() / width;
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double row = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            const double q = std::min(std::max(p[r * width + i], eps), 1.0 - eps);
            row += y[r * width + i] * std::log(q);
        }
        total += -row;
    }
    return total / static_cast<double>(rows);
}

/// counts[true * k + predicted], argmax with first-maximum tie breaking.
inline std::vector<std::size_t> confusion(const std::vector<double>& y, const std::vector<double>& p, std::size_t k) {
    std::vector<std::size_t> counts(k * k, 0);
    const std::size_t rows = y.size() / k;
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t t = 0, q = 0;
        for (std::size_t i = 1; i < k; ++i) {
            if (y[r * k + i] > y[r * k + t]) {
                t = i;
            }
            if (p[r * k + i] > p[r * k + q]) {
                q = i;
            }
        }
        counts[t * k + q] += 1;
    }
    return counts;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& e : v) {
        e = d(rng);
    }
    return v;
}

}  // namespace oracle
