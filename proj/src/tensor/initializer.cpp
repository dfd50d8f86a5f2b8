#include "mlwb/tensor/initializer.hpp"

#include <cmath>
#include <string>

#include "mlwb/tensor/rng.hpp"

namespace mlwb {

std::string_view to_string(Initializer i) {
    switch (i) {
        case Initializer::zeros: return "zeros";
        case Initializer::ones: return "ones";
        case Initializer::constant: return "constant";
        case Initializer::glorot_uniform: return "glorot_uniform";
        case Initializer::he_uniform: return "he_uniform";
        case Initializer::random_normal: return "random_normal";
        case Initializer::random_uniform: return "random_uniform";
    }
    return "zeros";
}

Initializer parse_initializer(std::string_view name) {
    for (Initializer i : {Initializer::zeros, Initializer::ones, Initializer::constant, Initializer::glorot_uniform,
                          Initializer::he_uniform, Initializer::random_normal, Initializer::random_uniform}) {
        if (to_string(i) == name) {
            return i;
        }
    }
    throw ConfigError("unknown initializer '" + std::string(name) + "'");
}

Fans compute_fans(const Shape& shape) {
    Fans f;
    if (shape.size() == 1) {
        f.in = f.out = static_cast<double>(shape[0]);
    } else if (shape.size() == 2) {
        f.in = static_cast<double>(shape[0]);
        f.out = static_cast<double>(shape[1]);
    } else if (shape.size() >= 3) {
        double receptive = 1.0;
        for (std::size_t i = 0; i + 2 < shape.size(); ++i) {
            receptive *= static_cast<double>(shape[i]);
        }
        f.in = receptive * static_cast<double>(shape[shape.size() - 2]);
        f.out = receptive * static_cast<double>(shape.back());
    }
    return f;
}

Tensor initialize(const InitializerKind& kind, const Shape& shape, std::uint64_t fallback_seed) {
    const std::size_t n = element_count(shape);
    std::vector<float> out(n);
    SplitMix64 rng(kind.seed.value_or(fallback_seed));

    auto fill_uniform = [&](double lo, double hi) {
        for (auto& v : out) {
            v = static_cast<float>(rng.uniform(lo, hi));
        }
    };

    switch (kind.name) {
        case Initializer::zeros:
            break;
        case Initializer::ones:
            std::fill(out.begin(), out.end(), 1.0f);
            break;
        case Initializer::constant:
            if (!kind.value) {
                throw ConfigError("constant initializer requires 'value'");
            }
            std::fill(out.begin(), out.end(), static_cast<float>(*kind.value));
            break;
        case Initializer::glorot_uniform: {
            const Fans f = compute_fans(shape);
            const double limit = std::sqrt(6.0 / (f.in + f.out));
            fill_uniform(-limit, limit);
            break;
        }
        case Initializer::he_uniform: {
            const Fans f = compute_fans(shape);
            const double limit = std::sqrt(6.0 / f.in);
            fill_uniform(-limit, limit);
            break;
        }
        case Initializer::random_normal: {
            const double mean = kind.mean.value_or(0.0);
            const double stddev = kind.stddev.value_or(0.05);
            if (!(stddev >= 0.0)) {
                throw ConfigError("random_normal stddev must be >= 0");
            }
            for (auto& v : out) {
                v = static_cast<float>(mean + stddev * rng.normal());
            }
            break;
        }
        case Initializer::random_uniform: {
            const double lo = kind.minval.value_or(-0.05);
            const double hi = kind.maxval.value_or(0.05);
            if (!(lo <= hi)) {
                throw ConfigError("random_uniform requires minval <= maxval");
            }
            fill_uniform(lo, hi);
            break;
        }
    }
    return Tensor(shape, std::move(out));
}

}  // namespace mlwb
