#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mlwb/model/model_spec.hpp"

namespace mlwb {

struct AddLayer {
    std::size_t index = 0;
    LayerSpec layer;
    bool operator==(const AddLayer&) const = default;
};

struct RemoveLayer {
    std::size_t index = 0;
    bool operator==(const RemoveLayer&) const = default;
};

/// Removes the layer at `from` and reinserts it so that it ends up at `to`.
struct MoveLayer {
    std::size_t from = 0;
    std::size_t to = 0;
    bool operator==(const MoveLayer&) const = default;
};

/// Replaces one top-level parameter of a layer with a JSON value in model-file
/// syntax, e.g. {"field": "activation", "value": {"name": "elu", "alpha": 0.5}}.
struct SetParam {
    std::size_t index = 0;
    std::string field;
    nlohmann::json value;
    bool operator==(const SetParam&) const = default;
};

struct SetInputDescriptor {
    InputDescriptor input;
    bool operator==(const SetInputDescriptor&) const = default;
};

struct SetLoss {
    LossKind loss = LossKind::mse;
    bool operator==(const SetLoss&) const = default;
};

struct SetOptimizer {
    OptimizerSpec optimizer;
    bool operator==(const SetOptimizer&) const = default;
};

using EditPayload = std::variant<AddLayer, RemoveLayer, MoveLayer, SetParam, SetInputDescriptor, SetLoss, SetOptimizer>;

enum class EditKind { add_layer, remove_layer, move_layer, set_param, set_input_descriptor, set_loss, set_optimizer };

std::string_view to_string(EditKind k);

struct EditOp {
    EditPayload payload;
    /// Filled in once the edit has been applied to a concrete spec.
    std::optional<EditPayload> inverse;

    EditKind kind() const noexcept { return static_cast<EditKind>(payload.index()); }
    bool operator==(const EditOp&) const = default;
};

/// Applies one edit without any validation and returns the payload that undoes
/// it. Throws ContractError for out-of-range indices and ConfigError for
/// unknown fields or malformed values. Added layers with id 0 get a fresh id.
EditPayload apply_payload(ModelSpec& spec, const EditPayload& payload);

nlohmann::json to_json(const EditOp& op);
EditOp edit_from_json(const nlohmann::json& j);

/// Undo/redo log of applied edit groups (a user edit plus any automatic fixes).
/// Unbounded; redo entries are dropped when a new group is recorded.
class UndoHistory {
public:
    void record(std::vector<EditOp> group);

    bool can_undo() const noexcept { return !undo_.empty(); }
    bool can_redo() const noexcept { return !redo_.empty(); }
    std::size_t undo_depth() const noexcept { return undo_.size(); }
    std::size_t redo_depth() const noexcept { return redo_.size(); }

    /// Returns the spec with the most recent group reverted; nullopt when empty.
    std::optional<ModelSpec> undo(const ModelSpec& current);
    std::optional<ModelSpec> redo(const ModelSpec& current);

    void clear();

private:
    std::vector<std::vector<EditOp>> undo_;
    std::vector<std::vector<EditOp>> redo_;
};

}  // namespace mlwb
