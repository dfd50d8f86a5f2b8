#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

/// Central difference (f(x+h) - f(x-h)) / 2h for every coordinate of x.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double step = 1e-3) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double up = f(x);
        x[i] = orig - step;
        const double down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// |a - b| / max(|a|, |b|); 0 when both are 0.
inline double relative_error(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace oracle
