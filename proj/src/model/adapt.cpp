#include "mlwb/model/adapt.hpp"

#include <string>

#include "mlwb/model/model_file.hpp"

namespace mlwb {

EditResult adapt_output_layer(const ModelSpec& spec, const TargetInfo& target, OperationalMode mode) {
    if (target.count == 0) {
        throw ContractError("targets must have at least one column or category");
    }
    const bool categorical = target.kind == TargetInfo::Kind::categorical;
    const LossKind loss = categorical ? LossKind::categorical_crossentropy : LossKind::mse;
    const auto units = static_cast<std::int64_t>(target.count);
    std::vector<EditOp> edits;

    if (spec.layers.empty() || spec.layers.back().kind() != LayerKind::dense) {
        const LayerSpec head = dense_layer(units, categorical ? Activation::softmax : Activation::linear);
        const EditOp append{AddLayer{spec.layers.size(), head}, std::nullopt};
        if (mode == OperationalMode::expert) {
            EditResult r;
            r.spec = spec;
            r.report = validate(spec, mode);
            Finding f;
            f.field = "layers";
            f.severity = Severity::error;
            f.message = "the last layer is not dense, so it cannot be sized to the " + std::to_string(target.count) +
                        " target " + (categorical ? "categories" : "columns") + "; append a dense layer";
            f.fix = append;
            r.report.findings.push_back(std::move(f));
            return r;
        }
        edits.push_back(append);
        if (spec.loss != loss) {
            edits.push_back(EditOp{SetLoss{loss}, std::nullopt});
        }
        return apply_edits(spec, edits, mode);
    }

    const std::size_t last = spec.layers.size() - 1;
    const auto& p = spec.layers[last].as<DenseParams>();
    Activation wanted = Activation::softmax;
    if (!categorical) {
        const bool keep_sigmoid = p.activation.name == Activation::sigmoid && target.unit_range;
        wanted = keep_sigmoid ? Activation::sigmoid : Activation::linear;
    }
    if (p.units != units) {
        edits.push_back(EditOp{SetParam{last, "units", units}, std::nullopt});
    }
    if (p.activation.name != wanted) {
        edits.push_back(EditOp{SetParam{last, "activation", to_json(ActivationKind{wanted})}, std::nullopt});
    }
    if (spec.loss != loss) {
        edits.push_back(EditOp{SetLoss{loss}, std::nullopt});
    }
    if (edits.empty()) {
        EditResult r;
        r.spec = spec;
        r.report = validate(spec, mode);
        return r;
    }
    return apply_edits(spec, edits, mode);
}

}  // namespace mlwb
