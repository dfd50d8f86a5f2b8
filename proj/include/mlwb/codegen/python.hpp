#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mlwb/model/model_spec.hpp"
#include "mlwb/tensor/errors.hpp"
#include "mlwb/train/trainer.hpp"

namespace mlwb {

/// A layer or setting the target framework cannot express faithfully.
class CodegenError : public Error {
public:
    CodegenError(const std::string& message, std::size_t layer) : Error(message), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

/// The framework version the generated script was checked against.
constexpr const char* kTensorflowVersion = "2.21.0";

struct ManifestEntry {
    std::size_t layer = 0;
    /// e.g. "layers.Dense".
    std::string construct;

    bool operator==(const ManifestEntry&) const = default;
};

struct GeneratedProgram {
    std::string source;
    std::string instructions;
    std::vector<ManifestEntry> manifest;
};

/// Keras script that declares the model layer by layer, trains it with the
/// given config (or only predicts with --predict-only) and optionally loads and
/// saves weights in the workbench model-file format. Pure: identical inputs give
/// byte-identical output. ContractError for a spec with validation errors,
/// CodegenError for constructs without a faithful Keras equivalent.
GeneratedProgram generate_python(const ModelSpec& spec, const TrainConfig& config);

/// Shortest round-tripping Python float literal ("0.01", "1e-08", "2.0").
std::string python_float(double v);

}  // namespace mlwb
