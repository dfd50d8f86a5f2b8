#include "mlwb/train/trainer.hpp"

#include <chrono>
#include <cmath>

#include "mlwb/tensor/rng.hpp"
#include "mlwb/train/forward.hpp"

namespace mlwb {

namespace {

constexpr std::size_t kEvalChunk = 256;

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
    const std::size_t stride = t.size() / t.dim(0);
    std::vector<float> data;
    data.reserve(rows.size() * stride);
    for (std::size_t r : rows) {
        const auto src = t.data().subspan(r * stride, stride);
        data.insert(data.end(), src.begin(), src.end());
    }
    Shape s = t.shape();
    s[0] = rows.size();
    return Tensor(std::move(s), std::move(data));
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i] = begin + i;
    }
    return gather_rows(t, rows);
}

void check_dataset(const CompiledModel& model, const Tensor& x, const Tensor& y) {
    const Shape in = model.input_shape();
    const Shape out = model.output_shape();
    Shape want_x{x.rank() > 0 ? x.dim(0) : 0};
    want_x.insert(want_x.end(), in.begin(), in.end());
    if (x.shape() != want_x) {
        throw ShapeError("inputs must have shape [n, " + to_string(in).substr(1) + ", got " + to_string(x.shape()));
    }
    Shape want_y{x.dim(0)};
    want_y.insert(want_y.end(), out.begin(), out.end());
    if (y.shape() != want_y) {
        throw ShapeError("targets must have shape " + to_string(want_y) + " to match the model output, got " +
                         to_string(y.shape()));
    }
}

/// Inference over a data set in fixed chunks.
Tensor predict_all(const CompiledModel& model, const Tensor& x) {
    const std::size_t n = x.dim(0);
    std::vector<float> data;
    Shape shape;
    for (std::size_t b = 0; b < n; b += kEvalChunk) {
        const Tensor out = predict(model, slice_rows(x, b, std::min(n, b + kEvalChunk)));
        data.insert(data.end(), out.data().begin(), out.data().end());
        shape = out.shape();
    }
    shape[0] = n;
    return Tensor(std::move(shape), std::move(data));
}

template <typename T>
Var regularization_term(ForwardGraph<T>& fg, const CompiledModel& model, std::optional<Var> total) {
    auto& g = fg.graph;
    auto add_term = [&](Var w, const Regularizer& r) {
        if (r.kind == Regularizer::Kind::none || r.lambda == 0.0) {
            return;
        }
        const Var penalty = r.kind == Regularizer::Kind::l1 ? g.sum(g.abs(w)) : g.sum(g.square(w));
        const Var scaled = g.scale(penalty, static_cast<T>(r.lambda));
        total = total ? g.add(*total, scaled) : scaled;
    };
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& spec = model.layers[i].spec;
        const auto& w = fg.weights[i];
        if (spec.kind() == LayerKind::dense) {
            const auto& p = spec.as<DenseParams>();
            add_term(w[0], p.kernel_regularizer);
            if (p.use_bias) {
                add_term(w[1], p.bias_regularizer);
            }
        } else if (spec.kind() == LayerKind::conv2d) {
            const auto& p = spec.as<Conv2dParams>();
            add_term(w[0], p.kernel_regularizer);
            if (p.use_bias) {
                add_term(w[1], p.bias_regularizer);
            }
        }
    }
    return *total;
}

bool layer_trainable(const LayerSpec& spec) {
    switch (spec.kind()) {
        case LayerKind::dense:
            return spec.as<DenseParams>().trainable;
        case LayerKind::conv2d:
            return spec.as<Conv2dParams>().trainable;
        case LayerKind::batch_norm:
            return spec.as<BatchNormParams>().trainable;
        default:
            return false;
    }
}

struct Slot {
    std::size_t layer;
    std::size_t index;
};

/// Trainable weight slots; batch-norm moving statistics are updated separately.
std::vector<Slot> trainable_slots(const CompiledModel& model) {
    std::vector<Slot> slots;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const CompiledLayer& layer = model.layers[i];
        if (!layer_trainable(layer.spec)) {
            continue;
        }
        const std::size_t count = layer.spec.kind() == LayerKind::batch_norm ? 2 : layer.weights.size();
        for (std::size_t j = 0; j < count; ++j) {
            slots.push_back({i, j});
        }
    }
    return slots;
}

class Optimizer {
public:
    Optimizer(const OptimizerSpec& spec, const CompiledModel& model, const std::vector<Slot>& slots) : spec_(spec) {
        if (spec_.kind == OptimizerKind::adam) {
            for (const Slot& s : slots) {
                const Shape& shape = model.layers[s.layer].weights[s.index].shape();
                m_.push_back(Tensor64::zeros(shape));
                v_.push_back(Tensor64::zeros(shape));
            }
        }
    }

    void step(CompiledModel& model, const std::vector<Slot>& slots, const std::vector<Tensor>& grads) {
        ++t_;
        const double lr = spec_.learning_rate;
        const double c1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < slots.size(); ++k) {
            auto w = model.layers[slots[k].layer].weights[slots[k].index].data();
            const auto g = grads[k].data();
            if (spec_.kind == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < w.size(); ++i) {
                    w[i] = static_cast<float>(w[i] - lr * g[i]);
                }
                continue;
            }
            auto m = m_[k].data();
            auto v = v_[k].data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g[i];
                m[i] = spec_.beta1 * m[i] + (1.0 - spec_.beta1) * gi;
                v[i] = spec_.beta2 * v[i] + (1.0 - spec_.beta2) * gi * gi;
                const double m_hat = m[i] / c1;
                const double v_hat = v[i] / c2;
                w[i] = static_cast<float>(w[i] - lr * m_hat / (std::sqrt(v_hat) + spec_.epsilon));
            }
        }
    }

private:
    OptimizerSpec spec_;
    std::uint64_t t_ = 0;
    std::vector<Tensor64> m_;
    std::vector<Tensor64> v_;
};

void update_moving_statistics(CompiledModel& model, const ForwardGraph<float>& fg) {
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!fg.batch_statistics[i]) {
            continue;
        }
        CompiledLayer& layer = model.layers[i];
        const double momentum = layer.spec.as<BatchNormParams>().momentum;
        const Tensor& x = fg.graph.value(fg.layer_inputs[i]);
        Tensor mean = Tensor::zeros(layer.weights[2].shape());
        Tensor var = Tensor::zeros(layer.weights[3].shape());
        channel_moments(x, mean, var);
        auto mm = layer.weights[2].data();
        auto mv = layer.weights[3].data();
        for (std::size_t c = 0; c < mm.size(); ++c) {
            mm[c] = static_cast<float>(momentum * mm[c] + (1.0 - momentum) * mean[c]);
            mv[c] = static_cast<float>(momentum * mv[c] + (1.0 - momentum) * var[c]);
        }
    }
}

std::vector<WeightDeltaSummary> weight_deltas(const CompiledModel& before, const CompiledModel& after) {
    std::vector<WeightDeltaSummary> out(after.layers.size());
    for (std::size_t i = 0; i < after.layers.size(); ++i) {
        for (std::size_t j = 0; j < after.layers[i].weights.size(); ++j) {
            const auto a = before.layers[i].weights[j].data();
            const auto b = after.layers[i].weights[j].data();
            for (std::size_t e = 0; e < a.size(); ++e) {
                const double d = static_cast<double>(b[e]) - static_cast<double>(a[e]);
                if (d > kDeltaTolerance) {
                    ++out[i].increased;
                } else if (d < -kDeltaTolerance) {
                    ++out[i].decreased;
                } else {
                    ++out[i].unchanged;
                }
            }
        }
    }
    return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void check_train_config(const TrainConfig& config, std::size_t samples) {
    if (config.epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (config.batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (!(config.validation_split >= 0.0 && config.validation_split < 1.0)) {
        throw ConfigError("validation_split must lie in [0, 1)");
    }
    const auto held_out = static_cast<std::size_t>(std::floor(static_cast<double>(samples) * config.validation_split));
    const std::size_t train_size = samples - held_out;
    if (train_size == 0) {
        throw ConfigError("no training samples left after the validation split");
    }
    if (static_cast<std::size_t>(config.batch_size) > train_size) {
        throw ConfigError("batch_size " + std::to_string(config.batch_size) + " exceeds the " +
                          std::to_string(train_size) + " training samples");
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"shuffle", c.shuffle},
            {"seed", c.seed},
            {"validation_split", c.validation_split}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ParseError("train config must be an object", 0, "");
    }
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "epochs") {
                c.epochs = value.get<std::int64_t>();
            } else if (key == "batch_size") {
                c.batch_size = value.get<std::int64_t>();
            } else if (key == "shuffle") {
                c.shuffle = value.get<bool>();
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else if (key == "validation_split") {
                c.validation_split = value.get<double>();
            } else {
                throw ParseError("unknown train config field", 0, key);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("invalid value: ") + e.what(), 0, key);
        }
    }
    return c;
}

std::string_view to_string(TrainEventKind k) {
    switch (k) {
        case TrainEventKind::batch_end:
            return "batch_end";
        case TrainEventKind::epoch_end:
            return "epoch_end";
        case TrainEventKind::train_end:
            return "train_end";
        case TrainEventKind::aborted:
            return "aborted";
    }
    return "?";
}

nlohmann::json to_json(const TrainEvent& e) {
    const MetricsSnapshot& m = e.metrics;
    nlohmann::json metrics{{"loss", m.loss}, {"batch_duration_ms", m.batch_duration_ms}};
    if (m.accuracy) {
        metrics["accuracy"] = *m.accuracy;
    }
    if (m.confusion) {
        metrics["confusion"] = to_json(*m.confusion);
    }
    if (!m.weight_deltas.empty()) {
        nlohmann::json deltas = nlohmann::json::array();
        for (const auto& d : m.weight_deltas) {
            deltas.push_back({{"increased", d.increased}, {"decreased", d.decreased}, {"unchanged", d.unchanged}});
        }
        metrics["weight_deltas"] = std::move(deltas);
    }
    if (m.validation_loss) {
        metrics["validation_loss"] = *m.validation_loss;
    }
    if (m.validation_accuracy) {
        metrics["validation_accuracy"] = *m.validation_accuracy;
    }
    return {{"kind", to_string(e.kind)}, {"epoch", e.epoch}, {"batch", e.batch}, {"metrics", std::move(metrics)}};
}

double evaluate_loss(const CompiledModel& model, const Tensor& x, const Tensor& y) {
    check_dataset(model, x, y);
    return loss_value(model.spec.loss, y, predict_all(model, x));
}

CompiledModel train(CompiledModel model, const Tensor& x, const Tensor& y, const TrainConfig& config,
                    const TrainCallbacks& callbacks, std::stop_token stop) {
    if (x.rank() == 0) {
        throw ShapeError("inputs need a leading sample axis");
    }
    check_dataset(model, x, y);
    const std::size_t samples = x.dim(0);
    check_train_config(config, samples);

    const auto held_out = static_cast<std::size_t>(std::floor(static_cast<double>(samples) * config.validation_split));
    const std::size_t train_size = samples - held_out;
    const Tensor x_train = held_out > 0 ? slice_rows(x, 0, train_size) : x;
    const Tensor y_train = held_out > 0 ? slice_rows(y, 0, train_size) : y;
    std::optional<Tensor> x_val;
    std::optional<Tensor> y_val;
    if (held_out > 0) {
        x_val = slice_rows(x, train_size, samples);
        y_val = slice_rows(y, train_size, samples);
    }

    const bool classification = is_classification(model, y);
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    const std::size_t batches = (train_size + batch_size - 1) / batch_size;
    const std::vector<Slot> slots = trainable_slots(model);
    Optimizer optimizer(model.spec.optimizer, model, slots);
    std::vector<Var> wrt;

    auto emit = [&](TrainEventKind kind, std::size_t epoch, std::size_t batch, MetricsSnapshot metrics) {
        if (callbacks.on_event) {
            callbacks.on_event(TrainEvent{kind, epoch, batch, std::move(metrics)});
        }
    };

    MetricsSnapshot last;
    for (std::size_t epoch = 0; epoch < static_cast<std::size_t>(config.epochs); ++epoch) {
        std::vector<std::size_t> order;
        if (config.shuffle) {
            order = seeded_permutation(train_size, mix_seed(config.seed, epoch, 0x5u));
        } else {
            order.resize(train_size);
            for (std::size_t i = 0; i < train_size; ++i) {
                order[i] = i;
            }
        }

        double loss_sum = 0.0;
        double duration_sum = 0.0;
        for (std::size_t batch = 0; batch < batches; ++batch) {
            if (stop.stop_requested()) {
                emit(TrainEventKind::aborted, epoch, batch, last);
                return model;
            }
            const auto start = std::chrono::steady_clock::now();
            const std::size_t begin = batch * batch_size;
            const std::size_t end = std::min(train_size, begin + batch_size);
            const std::span<const std::size_t> rows(order.data() + begin, end - begin);
            const Tensor xb = gather_rows(x_train, rows);
            const Tensor yb = gather_rows(y_train, rows);

            ForwardOptions options{.training = true, .seed = mix_seed(config.seed, epoch, batch + 1)};
            auto fg = build_forward(model, xb, options);
            auto& g = fg.graph;
            const Var target = g.leaf(yb);
            const Var data_loss = model.spec.loss == LossKind::mse ? g.mse(fg.output, target)
                                                                    : g.categorical_crossentropy(fg.output, target);
            const Var loss = regularization_term(fg, model, data_loss);

            wrt.clear();
            for (const Slot& s : slots) {
                wrt.push_back(fg.weights[s.layer][s.index]);
            }
            const std::vector<Tensor> grads = g.gradient(loss, wrt);

            const CompiledModel before = model;
            optimizer.step(model, slots, grads);
            update_moving_statistics(model, fg);

            MetricsSnapshot m;
            m.loss = static_cast<double>(g.value(loss).item());
            if (classification) {
                m.accuracy = accuracy(confusion_from(yb, g.value(fg.output)));
            }
            m.weight_deltas = weight_deltas(before, model);
            m.batch_duration_ms = elapsed_ms(start);
            loss_sum += m.loss * static_cast<double>(end - begin);
            duration_sum += m.batch_duration_ms;

            if (callbacks.on_commit) {
                callbacks.on_commit(model, epoch, batch);
            }
            emit(TrainEventKind::batch_end, epoch, batch, m);
            last = std::move(m);
        }

        MetricsSnapshot em;
        em.loss = loss_sum / static_cast<double>(train_size);
        em.batch_duration_ms = duration_sum / static_cast<double>(batches);
        if (classification) {
            em.confusion = confusion_from(y_train, predict_all(model, x_train));
            em.accuracy = accuracy(*em.confusion);
        }
        if (x_val) {
            const Tensor pred = predict_all(model, *x_val);
            em.validation_loss = loss_value(model.spec.loss, *y_val, pred);
            if (classification) {
                em.validation_accuracy = accuracy(confusion_from(*y_val, pred));
            }
        }
        last = em;
        emit(TrainEventKind::epoch_end, epoch, batches, std::move(em));
    }
    emit(TrainEventKind::train_end, static_cast<std::size_t>(config.epochs - 1), batches, last);
    return model;
}

}  // namespace mlwb
