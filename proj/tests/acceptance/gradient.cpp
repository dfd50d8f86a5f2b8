// Autodiff gradients of whole models against central finite differences.

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "acceptance.hpp"
#include "mlwb/train/forward.hpp"
#include "oracles/finite_difference.hpp"
#include "oracles/naive.hpp"

using namespace mlwb;

namespace acceptance {

namespace {

constexpr int kModels = 50;
constexpr double kStep = 1e-3;
constexpr double kTolerance = 1e-4;
constexpr double kMagnitudeFloor = 1e-6;

std::int64_t between(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

ActivationKind hidden_activation(std::mt19937_64& rng) {
    switch (rng() % 5) {
        case 0: return {Activation::linear};
        case 1: return {Activation::relu};
        case 2: return {Activation::elu, 0.5 + static_cast<double>(rng() % 10) / 10.0};
        case 3: return {Activation::sigmoid};
        default: return {Activation::tanh};
    }
}

LayerSpec conv_layer(std::mt19937_64& rng, std::int64_t h, std::int64_t w) {
    LayerSpec layer = default_layer(LayerKind::conv2d);
    auto& p = layer.as<Conv2dParams>();
    p.filters = between(rng, 1, 4);
    p.kernel_size = {between(rng, 1, std::min<std::int64_t>(3, h)), between(rng, 1, std::min<std::int64_t>(3, w))};
    p.stride = between(rng, 1, 2);
    p.padding = rng() % 2 ? Padding::same : Padding::valid;
    p.activation = hidden_activation(rng);
    return layer;
}

/// Dense or conv network of at most four layers; inputs at most 8x8x3.
ModelSpec random_model(std::mt19937_64& rng) {
    for (;;) {
        ModelSpec spec;
        const bool softmax_head = rng() % 2 == 0;
        if (rng() % 2 == 0) {
            const std::int64_t h = between(rng, 3, 8), w = between(rng, 3, 8), c = between(rng, 1, 3);
            spec.input = rng() % 2 ? InputDescriptor{ImageInput{h, w, c}} : InputDescriptor{CustomInput{{h, w, c}}};
            spec.layers.push_back(conv_layer(rng, h, w));
            switch (rng() % 3) {
                case 0: spec.layers.push_back(default_layer(LayerKind::max_pool2d)); break;
                case 1: spec.layers.push_back(conv_layer(rng, h, w)); break;
                default: break;
            }
            spec.layers.push_back(default_layer(LayerKind::flatten));
        } else {
            spec.input = ColumnsInput{between(rng, 1, 8)};
            for (std::int64_t i = between(rng, 0, 3); i > 0; --i) {
                LayerSpec hidden = dense_layer(between(rng, 1, 6), Activation::linear);
                hidden.as<DenseParams>().activation = hidden_activation(rng);
                spec.layers.push_back(hidden);
            }
        }
        if (spec.layers.size() >= 4) {
            continue;
        }
        if (softmax_head) {
            spec.layers.push_back(dense_layer(between(rng, 2, 4), Activation::softmax));
            spec.loss = LossKind::categorical_crossentropy;
        } else {
            const Activation heads[] = {Activation::linear, Activation::sigmoid, Activation::tanh};
            spec.layers.push_back(dense_layer(between(rng, 1, 4), heads[rng() % 3]));
            spec.loss = LossKind::mse;
        }
        assign_layer_ids(spec);
        if (!validate(spec, OperationalMode::expert).has_errors()) {
            return spec;
        }
    }
}

/// Gives biases random values so that relu/elu pre-activations are not all at zero.
CompiledModel with_random_biases(CompiledModel m, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> d(-0.5f, 0.5f);
    for (auto& layer : m.layers) {
        if (layer.weights.size() == 2) {
            for (float& v : layer.weights[1].data()) {
                v = d(rng);
            }
        }
    }
    return m;
}

/// Non-smooth points of the network: signs of relu/elu pre-activations and
/// max-pool winners. A finite-difference step that changes any of them
/// straddles a point where the loss is not differentiable.
class KinkProbe {
public:
    KinkProbe(const CompiledModel& model, const ForwardGraph<double>& fg) : model_(model), fg_(fg) {}

    std::vector<std::int64_t> pattern() const {
        std::vector<std::int64_t> out;
        for (std::size_t i = 0; i < model_.layers.size(); ++i) {
            const LayerSpec& layer = model_.layers[i].spec;
            const ActivationKind* act = nullptr;
            std::optional<Var> pre;
            if (layer.kind() == LayerKind::dense) {
                act = &layer.as<DenseParams>().activation;
                pre = fg_.pre_activations[i];
            } else if (layer.kind() == LayerKind::conv2d) {
                act = &layer.as<Conv2dParams>().activation;
                pre = fg_.pre_activations[i];
            } else if (layer.kind() == LayerKind::max_pool2d) {
                pool_winners(layer.as<MaxPool2dParams>(), fg_.graph.value(fg_.layer_inputs[i]), out);
            }
            if (act && pre && (act->name == Activation::relu || act->name == Activation::elu)) {
                for (double v : fg_.graph.value(*pre).data()) {
                    out.push_back(v > 0.0 ? 1 : 0);
                }
            }
        }
        return out;
    }

private:
    static void pool_winners(const MaxPool2dParams& p, const Tensor64& x, std::vector<std::int64_t>& out) {
        const auto& s = x.shape();
        const std::size_t n = s[0], h = s[1], w = s[2], c = s[3];
        const auto ph = static_cast<std::size_t>(p.pool_size[0]), pw = static_cast<std::size_t>(p.pool_size[1]);
        const auto stride = static_cast<std::size_t>(p.stride);
        const std::size_t oh = window_output_size(h, ph, stride, p.padding);
        const std::size_t ow = window_output_size(w, pw, stride, p.padding);
        const std::ptrdiff_t top = p.padding == Padding::same ? same_padding_before(h, ph, stride) : 0;
        const std::ptrdiff_t left = p.padding == Padding::same ? same_padding_before(w, pw, stride) : 0;
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        std::int64_t best = -1;
                        double best_v = 0.0;
                        for (std::size_t dy = 0; dy < ph; ++dy) {
                            for (std::size_t dx = 0; dx < pw; ++dx) {
                                const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * stride + dy) - top;
                                const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * stride + dx) - left;
                                if (y < 0 || xx < 0 || y >= static_cast<std::ptrdiff_t>(h) ||
                                    xx >= static_cast<std::ptrdiff_t>(w)) {
                                    continue;
                                }
                                const std::size_t idx = ((b * h + static_cast<std::size_t>(y)) * w +
                                                         static_cast<std::size_t>(xx)) * c + ch;
                                if (best < 0 || x[idx] > best_v) {
                                    best = static_cast<std::int64_t>(idx);
                                    best_v = x[idx];
                                }
                            }
                        }
                        out.push_back(best);
                    }
                }
            }
        }
    }

    const CompiledModel& model_;
    const ForwardGraph<double>& fg_;
};

Tensor64 random_batch(std::mt19937_64& rng, Shape shape, double lo, double hi) {
    const std::size_t n = element_count(shape);
    return Tensor64(std::move(shape), oracle::random_vector(rng, n, lo, hi));
}

struct Tally {
    std::size_t checked = 0;
    std::size_t kinks = 0;
    std::size_t failures = 0;
    std::size_t below_floor = 0;
    std::size_t two_point_failures = 0;
    double worst = 0.0;
};

void check_model(const CompiledModel& model, std::mt19937_64& rng, Tally& tally) {
    const std::size_t batch = 2;
    Shape xs{batch};
    for (auto d : model.input_shape()) {
        xs.push_back(d);
    }
    Shape ys{batch};
    for (auto d : model.output_shape()) {
        ys.push_back(d);
    }
    const bool image = std::holds_alternative<ImageInput>(model.spec.input);
    auto fg = build_forward<double>(model, random_batch(rng, xs, image ? 0.0 : -1.0, 1.0));
    auto& g = fg.graph;

    Tensor64 target = Tensor64::zeros(ys);
    if (model.spec.loss == LossKind::categorical_crossentropy) {
        const std::size_t k = ys.back();
        for (std::size_t r = 0; r < batch; ++r) {
            target[r * k + rng() % k] = 1.0;
        }
    } else {
        target = random_batch(rng, ys, -1.0, 1.0);
    }
    const Var t = g.leaf(target);
    const Var loss = model.spec.loss == LossKind::mse ? g.mse(fg.output, t) : g.categorical_crossentropy(fg.output, t);

    std::vector<Var> leaves{fg.input};
    for (const auto& layer : fg.weights) {
        leaves.insert(leaves.end(), layer.begin(), layer.end());
    }
    const std::vector<Tensor64> analytic = g.gradient(loss, leaves);
    const KinkProbe probe(model, fg);
    const auto base_pattern = probe.pattern();

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const Tensor64 base = g.value(leaves[li]);
        for (std::size_t i = 0; i < base.size(); ++i) {
            bool kink = false;
            auto loss_at = [&](double offset) {
                Tensor64 moved = base;
                moved[i] = base[i] + offset;
                g.set_leaf(leaves[li], moved);
                g.evaluate();
                kink = kink || probe.pattern() != base_pattern;
                return g.value(loss).item();
            };
            const double up = loss_at(kStep), down = loss_at(-kStep);
            const double up2 = loss_at(2 * kStep), down2 = loss_at(-2 * kStep);
            g.set_leaf(leaves[li], base);
            if (kink) {
                ++tally.kinks;
                continue;
            }
            // Fourth-order central stencil; the two-point one is tallied for reference.
            const double numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * kStep);
            const double two_point = (up - down) / (2.0 * kStep);
            const double a = analytic[li][i];
            if (std::max(std::abs(a), std::abs(numeric)) <= kMagnitudeFloor) {
                ++tally.below_floor;
                continue;
            }
            ++tally.checked;
            const double err = oracle::relative_error(a, numeric);
            tally.worst = std::max(tally.worst, err);
            if (!(err < kTolerance)) {
                ++tally.failures;
            }
            if (!(oracle::relative_error(a, two_point) < kTolerance)) {
                ++tally.two_point_failures;
            }
        }
    }
    g.evaluate();
}

}  // namespace

Outcome gradient_correctness() {
    std::mt19937_64 rng(20240601);
    Tally tally;
    std::size_t conv_models = 0;
    for (int m = 0; m < kModels; ++m) {
        const ModelSpec spec = random_model(rng);
        conv_models += spec.layers.front().kind() == LayerKind::conv2d ? 1 : 0;
        check_model(with_random_biases(compile(spec, rng()), rng), rng, tally);
    }
    std::ostringstream detail;
    detail << kModels << " models (" << conv_models << " conv), " << tally.checked << " elements checked, max rel err "
           << tally.worst << ", " << tally.failures << " over " << kTolerance << "; skipped " << tally.kinks
           << " kink-straddling and " << tally.below_floor << " below " << kMagnitudeFloor << " (two-point stencil: "
           << tally.two_point_failures << " over)";
    return {tally.failures == 0 && tally.checked > 0, detail.str()};
}

}  // namespace acceptance
