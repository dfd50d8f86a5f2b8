#include "mlwb/train/metrics.hpp"

#include <numeric>

#include "mlwb/train/forward.hpp"

namespace mlwb {

namespace {

void require_same_shape(const Tensor& y, const Tensor& y_hat, const char* what) {
    if (y.shape() != y_hat.shape()) {
        throw ShapeError(std::string(what) + ": target shape " + to_string(y.shape()) + " differs from prediction shape " +
                         to_string(y_hat.shape()));
    }
}

std::size_t argmax_row(std::span<const float> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) {
            best = j;
        }
    }
    return best;
}

}  // namespace

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

double loss_mse(const Tensor& y, const Tensor& y_hat) {
    require_same_shape(y, y_hat, "mse");
    return static_cast<double>(mse_value(y, y_hat));
}

double loss_categorical_crossentropy(const Tensor& y_onehot, const Tensor& y_hat) {
    require_same_shape(y_onehot, y_hat, "categorical_crossentropy");
    return static_cast<double>(categorical_crossentropy_value(y_onehot, y_hat));
}

double loss_value(LossKind kind, const Tensor& y, const Tensor& y_hat) {
    return kind == LossKind::mse ? loss_mse(y, y_hat) : loss_categorical_crossentropy(y, y_hat);
}

bool is_one_hot(const Tensor& y) {
    if (y.rank() == 0) {
        return false;
    }
    const std::size_t k = y.shape().back();
    for (std::size_t r = 0; r < y.size() / k; ++r) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const float v = y[r * k + j];
            if (v == 1.0f) {
                ++ones;
            } else if (v != 0.0f) {
                return false;
            }
        }
        if (ones != 1) {
            return false;
        }
    }
    return true;
}

bool is_classification(const CompiledModel& model, const Tensor& y) {
    const Shape out = model.output_shape();
    if (out.empty() || out.back() < 2) {
        return false;
    }
    bool softmax_head = false;
    for (auto it = model.spec.layers.rbegin(); it != model.spec.layers.rend(); ++it) {
        if (it->kind() == LayerKind::dense) {
            softmax_head = it->as<DenseParams>().activation.name == Activation::softmax;
            break;
        }
        if (it->kind() == LayerKind::conv2d) {
            softmax_head = it->as<Conv2dParams>().activation.name == Activation::softmax;
            break;
        }
        if (it->kind() == LayerKind::activation) {
            softmax_head = it->as<ActivationParams>().activation.name == Activation::softmax;
            break;
        }
    }
    return softmax_head || is_one_hot(y);
}

ConfusionMatrix confusion_from(const Tensor& y, const Tensor& y_hat) {
    require_same_shape(y, y_hat, "confusion");
    if (y.rank() == 0) {
        throw ShapeError("confusion needs at least one axis");
    }
    ConfusionMatrix cm;
    cm.k = y.shape().back();
    cm.counts.assign(cm.k * cm.k, 0);
    const std::size_t rows = y.size() / cm.k;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t t = argmax_row(y.data().subspan(r * cm.k, cm.k));
        const std::size_t p = argmax_row(y_hat.data().subspan(r * cm.k, cm.k));
        ++cm.counts[t * cm.k + p];
    }
    return cm;
}

ConfusionMatrix confusion(const CompiledModel& model, const Tensor& x, const Tensor& y) {
    if (!is_classification(model, y)) {
        throw ContractError("confusion matrix needs a classification model (softmax output or one-hot targets)");
    }
    return confusion_from(y, predict(model, x));
}

double accuracy(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    if (total == 0) {
        return 0.0;
    }
    std::size_t trace = 0;
    for (std::size_t i = 0; i < cm.k; ++i) {
        trace += cm.at(i, i);
    }
    return static_cast<double>(trace) / static_cast<double>(total);
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < cm.k; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < cm.k; ++j) {
            row.push_back(cm.at(i, j));
        }
        rows.push_back(std::move(row));
    }
    return {{"k", cm.k}, {"counts", rows}};
}

}  // namespace mlwb
