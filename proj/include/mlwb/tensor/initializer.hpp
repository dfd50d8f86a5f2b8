#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "mlwb/tensor/tensor.hpp"

namespace mlwb {

enum class Initializer { zeros, ones, constant, glorot_uniform, he_uniform, random_normal, random_uniform };

std::string_view to_string(Initializer i);
Initializer parse_initializer(std::string_view name);

/// Weight initializer description. Only the params relevant to `name` are read:
/// constant -> value (required); random_normal -> mean/stddev (default 0 / 0.05);
/// random_uniform -> minval/maxval (default -0.05 / 0.05).
struct InitializerKind {
    Initializer name = Initializer::zeros;
    std::optional<double> value;
    std::optional<double> mean;
    std::optional<double> stddev;
    std::optional<double> minval;
    std::optional<double> maxval;
    std::optional<std::uint64_t> seed;

    bool operator==(const InitializerKind&) const = default;
};

/// fan_in / fan_out as used by glorot and he initializers.
/// Rank 2 [in, out]; rank 4 conv kernels [kh, kw, in, out]; rank 1 uses n for both.
struct Fans {
    double in = 1.0;
    double out = 1.0;
};
Fans compute_fans(const Shape& shape);

/// Deterministic: identical (kind, shape, seed) always gives identical values.
/// `fallback_seed` is used when `kind.seed` is unset.
Tensor initialize(const InitializerKind& kind, const Shape& shape, std::uint64_t fallback_seed = 0);

}  // namespace mlwb
