#pragma once

#include <cstddef>

#include "mlwb/model/validate.hpp"

namespace mlwb {

/// What the attached data set asks of the output layer.
struct TargetInfo {
    enum class Kind { categorical, regression };
    Kind kind = Kind::regression;
    std::size_t count = 1;
    /// Regression targets all lie in [0, 1]; lets a sigmoid head stay.
    bool unit_range = false;
};

/// Makes the last layer fit the targets: categorical -> units = count, softmax,
/// categorical_crossentropy; regression -> units = count, mse, and linear
/// activation unless the head is already sigmoid and the targets are in [0, 1].
/// If the last layer is not dense, guided modes append one; expert mode leaves
/// the spec unchanged and reports an error finding carrying that fix.
EditResult adapt_output_layer(const ModelSpec& spec, const TargetInfo& target, OperationalMode mode);

}  // namespace mlwb
