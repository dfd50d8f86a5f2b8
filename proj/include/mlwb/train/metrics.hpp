#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlwb/model/compiled.hpp"

namespace mlwb {

/// counts[true_class * k + predicted_class].
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> counts;

    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * k + predicted]; }
    std::size_t total() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

double loss_mse(const Tensor& y, const Tensor& y_hat);
double loss_categorical_crossentropy(const Tensor& y_onehot, const Tensor& y_hat);
double loss_value(LossKind kind, const Tensor& y, const Tensor& y_hat);

/// Rows along the last axis are exactly one 1 and zeros elsewhere.
bool is_one_hot(const Tensor& y);

/// Classification when the model ends in softmax or the targets are one-hot,
/// with at least two classes.
bool is_classification(const CompiledModel& model, const Tensor& y);

/// Argmax (first maximum) of predictions vs. targets along the last axis.
ConfusionMatrix confusion_from(const Tensor& y, const Tensor& y_hat);

/// ContractError for non-classification models.
ConfusionMatrix confusion(const CompiledModel& model, const Tensor& x, const Tensor& y);

/// trace / total; 0 for an empty matrix.
double accuracy(const ConfusionMatrix& cm);

nlohmann::json to_json(const ConfusionMatrix& cm);

}  // namespace mlwb
