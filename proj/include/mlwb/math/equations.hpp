#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlwb/model/compiled.hpp"

namespace mlwb {

struct Eligibility {
    bool eligible = false;
    std::string reason;
    /// The first offending layer, when a layer is the cause.
    std::optional<std::size_t> layer;
};

/// Vector input and only dense, flatten, reshape, dropout, activation,
/// batch-norm and noise layers (at least one).
Eligibility math_eligibility(const ModelSpec& spec);

/// Fixed 5-decimal rendering; negative zero prints as "0.00000".
std::string format_fixed5(double v);

struct FormulaDef {
    std::string name;
    std::string text;
    std::string latex;
};

/// Numbers as printed, row-major.
struct MatrixLiteral {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::string> cells;
};

struct EquationEntry {
    std::size_t layer = 0;
    LayerKind kind = LayerKind::dense;
    /// Output symbol, e.g. "h1" or "y".
    std::string lhs;
    /// Symbol of the vector fed into this layer.
    std::string input;
    std::size_t input_width = 0;
    std::size_t output_width = 0;
    std::string activation;
    /// Named operands: dense "W"/"b"; batch norm "gamma"/"beta"/"mean"/"variance".
    std::vector<std::pair<std::string, MatrixLiteral>> operands;
    std::string text;
    std::string latex;
};

struct EquationDoc {
    /// Only activations the model uses, in order of first use.
    std::vector<FormulaDef> activations;
    FormulaDef loss;
    /// One entry per layer that changes values at inference (dense, batch norm, activation).
    std::vector<EquationEntry> equations;
    /// Layers that are the identity at inference (flatten, reshape, dropout, noise).
    std::vector<std::size_t> passthrough;
};

/// ContractError carrying the eligibility reason for ineligible models.
EquationDoc render_equations(const CompiledModel& model);

std::string to_text(const EquationDoc& doc);
std::string to_latex(const EquationDoc& doc);
nlohmann::json to_json(const EquationDoc& doc);

enum class DeltaColor { black, green, red };

std::string_view to_string(DeltaColor c);

/// Green when curr - prev > epsilon, red when < -epsilon, black otherwise.
std::vector<DeltaColor> classify_deltas(const Tensor& prev, const Tensor& curr, double epsilon = 1e-12);

/// Per layer, per weight tensor. Both models must have identical weight shapes.
std::vector<std::vector<std::vector<DeltaColor>>> classify_model_deltas(const CompiledModel& prev,
                                                                        const CompiledModel& curr,
                                                                        double epsilon = 1e-12);

}  // namespace mlwb
