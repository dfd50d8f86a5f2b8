#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mlwb/model/shape_inference.hpp"
#include "mlwb/model/validate.hpp"

namespace mlwb {

struct CompiledLayer {
    LayerSpec spec;
    LayerShapes shapes;
    /// Order as in weight_shapes().
    std::vector<Tensor> weights;
};

/// Instantiated weights for one revision of a ModelSpec.
struct CompiledModel {
    ModelSpec spec;
    std::uint64_t revision = 0;
    std::uint64_t seed = 0;
    std::vector<CompiledLayer> layers;

    Shape input_shape() const;
    Shape output_shape() const;
    std::size_t parameter_count() const;
};

/// Thrown when a spec with error findings is compiled.
class CompileError : public Error {
public:
    CompileError(const std::string& message, ValidationReport report)
        : Error(message), report_(std::move(report)) {}

    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

/// Fresh weights from each layer's initializers. Unseeded initializers draw
/// from a seed derived from (seed, layer id, weight slot).
CompiledModel compile(const ModelSpec& spec, std::uint64_t seed = 0);

/// Uses the given per-layer weights, which must match the inferred shapes.
CompiledModel compile_with_weights(const ModelSpec& spec, const std::vector<std::vector<Tensor>>& weights,
                                   std::uint64_t seed = 0);

struct RecompileResult {
    CompiledModel model;
    std::vector<std::size_t> reinitialized;
};

/// Carries weights over, bit-exact, for every layer whose identity, kind and
/// weight shapes are unchanged; everything else is initialized afresh. With
/// `retain_weights` false every layer is reinitialized.
RecompileResult recompile(const CompiledModel& old, const ModelSpec& spec, bool retain_weights = true);

/// Indices in `after` whose weights recompile() would reinitialize. Both specs
/// must pass shape inference.
std::vector<std::size_t> reinitialized_layers(const ModelSpec& before, const ModelSpec& after);

}  // namespace mlwb
