#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlwb/model/edit.hpp"
#include "mlwb/model/model_spec.hpp"

namespace mlwb {

enum class Severity { error, warning };

std::string_view to_string(Severity s);

struct Finding {
    std::optional<std::size_t> layer;  // nullopt for model-level findings
    std::string field;
    Severity severity = Severity::error;
    std::string message;
    std::optional<EditOp> fix;

    bool operator==(const Finding&) const = default;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool has_errors() const noexcept;
    std::size_t error_count() const noexcept;
    bool operator==(const ValidationReport&) const = default;
};

/// Checks parameter ranges, shape compatibility and loss/output agreement.
/// Every error carries an automatic fix except for an empty layer list. The
/// mode only affects advisory warnings (beginner and introductory get more).
ValidationReport validate(const ModelSpec& spec, OperationalMode mode);

nlohmann::json to_json(const ValidationReport& report);

class EditRejected : public ContractError {
public:
    EditRejected(const std::string& message, ValidationReport report)
        : ContractError(message), report_(std::move(report)) {}

    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

struct EditResult {
    ModelSpec spec;
    /// The requested edit followed by any automatic fixes, inverses filled in.
    std::vector<EditOp> applied;
    ValidationReport report;
    /// Indices (in the new spec) of layers whose weights cannot be carried over.
    std::vector<std::size_t> reinitialized;
};

/// Pure. Beginner and introductory modes apply automatic fixes until no error
/// remains and throw EditRejected if that is impossible; expert mode applies the
/// edit as is and only reports.
EditResult apply_edit(const ModelSpec& spec, const EditOp& edit, OperationalMode mode);

/// Applies a sequence of edits as one group with the same mode rules.
EditResult apply_edits(const ModelSpec& spec, const std::vector<EditOp>& edits, OperationalMode mode);

/// Layer kinds that can be inserted at `index` without producing an error finding
/// (before any automatic fix). Used to restrict choices in guided modes.
std::vector<LayerKind> insertable_kinds(const ModelSpec& spec, std::size_t index);

}  // namespace mlwb
