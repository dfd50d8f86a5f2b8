#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stop_token>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlwb/train/metrics.hpp"

namespace mlwb {

struct TrainConfig {
    std::int64_t epochs = 10;
    std::int64_t batch_size = 32;
    bool shuffle = true;
    std::uint64_t seed = 0;
    /// The last fraction of the samples (in dataset order) is held out.
    double validation_split = 0.0;

    bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigError for out-of-range values; `samples` is the dataset size.
void check_train_config(const TrainConfig& config, std::size_t samples);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Per-layer count of weight elements that went up, down or stayed put in the
/// last update (|delta| <= 1e-12 counts as unchanged).
struct WeightDeltaSummary {
    std::size_t increased = 0;
    std::size_t decreased = 0;
    std::size_t unchanged = 0;
    bool operator==(const WeightDeltaSummary&) const = default;
};

constexpr double kDeltaTolerance = 1e-12;

struct MetricsSnapshot {
    /// batch_end: mean loss over the batch (including regularization), measured
    /// before the update. epoch_end/train_end: sample-weighted mean over the epoch.
    double loss = 0.0;
    /// Classification only. batch_end: the batch's training-mode predictions.
    /// epoch_end: the same evaluation that produced `confusion`.
    std::optional<double> accuracy;
    /// batch_end: this batch. epoch_end: mean over the epoch's batches.
    double batch_duration_ms = 0.0;
    /// epoch_end only, classification only: end-of-epoch weights evaluated on the training samples.
    std::optional<ConfusionMatrix> confusion;
    /// batch_end only.
    std::vector<WeightDeltaSummary> weight_deltas;
    /// epoch_end only, when a validation split is configured.
    std::optional<double> validation_loss;
    std::optional<double> validation_accuracy;
};

enum class TrainEventKind { batch_end, epoch_end, train_end, aborted };

std::string_view to_string(TrainEventKind k);

struct TrainEvent {
    TrainEventKind kind = TrainEventKind::batch_end;
    std::size_t epoch = 0;
    std::size_t batch = 0;
    MetricsSnapshot metrics;
};

nlohmann::json to_json(const TrainEvent& e);

struct TrainCallbacks {
    std::function<void(const TrainEvent&)> on_event;
    /// Called after each weight update, before the batch_end event.
    std::function<void(const CompiledModel&, std::size_t epoch, std::size_t batch)> on_commit;
};

/// Mini-batch training with the model's loss and optimizer. Emits batch_end per
/// batch, epoch_end per epoch, then train_end; a stop request is honoured
/// between batches and ends the run with a single aborted event. Layers with
/// trainable = false keep their weights bit-identical.
CompiledModel train(CompiledModel model, const Tensor& x, const Tensor& y, const TrainConfig& config,
                    const TrainCallbacks& callbacks = {}, std::stop_token stop = {});

/// Mean loss of the model (inference mode) on a data set.
double evaluate_loss(const CompiledModel& model, const Tensor& x, const Tensor& y);

}  // namespace mlwb
