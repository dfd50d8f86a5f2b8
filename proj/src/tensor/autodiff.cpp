#include "mlwb/tensor/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace mlwb {

namespace {

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, double (*f)(double, double)) {
    if (a.shape() != b.shape()) {
        throw ShapeError("elementwise shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<T>(f(a[i], b[i]));
    }
    return BasicTensor<T>(a.shape(), std::move(out));
}

template <typename T>
BasicTensor<T> scaled(const BasicTensor<T>& a, double s) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<T>(static_cast<double>(a[i]) * s);
    }
    return BasicTensor<T>(a.shape(), std::move(out));
}

double plus(double x, double y) { return x + y; }
double minus(double x, double y) { return x - y; }
double times(double x, double y) { return x * y; }

// Column sums over all but the last axis.
template <typename T>
BasicTensor<T> reduce_to_last(const BasicTensor<T>& g) {
    const std::size_t c = g.shape().back();
    std::vector<double> acc(c, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        acc[i % c] += g[i];
    }
    return BasicTensor<T>(Shape{c}, std::vector<T>(acc.begin(), acc.end()));
}

template <typename T>
BasicTensor<T> filled_like(const BasicTensor<T>& like, double v) {
    return BasicTensor<T>::filled(like.shape(), static_cast<T>(v));
}

}  // namespace

template <typename T>
Var BasicGraph<T>::leaf(TensorT value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}});
    return Var{nodes_.size() - 1};
}

template <typename T>
void BasicGraph<T>::set_leaf(Var v, TensorT value) {
    Node& n = nodes_.at(v.id);
    if (n.forward) {
        throw ContractError("set_leaf on interior node " + std::to_string(v.id));
    }
    if (n.value.shape() != value.shape()) {
        throw ShapeError("set_leaf shape " + to_string(value.shape()) + " differs from " + to_string(n.value.shape()));
    }
    n.value = std::move(value);
}

template <typename T>
void BasicGraph<T>::evaluate() {
    for (Node& n : nodes_) {
        if (n.forward) {
            n.value = n.forward(inputs_of(n));
        }
    }
}

template <typename T>
typename BasicGraph<T>::Inputs BasicGraph<T>::inputs_of(const Node& n) const {
    Inputs in;
    in.reserve(n.operands.size());
    for (std::size_t id : n.operands) {
        in.push_back(&nodes_[id].value);
    }
    return in;
}

template <typename T>
Var BasicGraph<T>::push(std::vector<Var> operands, Forward forward, Backward backward) {
    Node n;
    for (Var v : operands) {
        if (v.id >= nodes_.size()) {
            throw ContractError("operand " + std::to_string(v.id) + " is not part of this graph");
        }
        n.operands.push_back(v.id);
    }
    n.forward = std::move(forward);
    n.backward = std::move(backward);
    n.value = n.forward(inputs_of(n));
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

template <typename T>
Var BasicGraph<T>::matmul(Var a, Var b) {
    return push(
        {a, b}, [](const Inputs& in) { return mlwb::matmul(*in[0], *in[1]); },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{mlwb::matmul(g, transpose(*in[1])), mlwb::matmul(transpose(*in[0]), g)};
        });
}

template <typename T>
Var BasicGraph<T>::add(Var a, Var b) {
    return push(
        {a, b}, [](const Inputs& in) { return elementwise(*in[0], *in[1], plus); },
        [](const Inputs&, const TensorT&, const TensorT& g) { return std::vector<TensorT>{g, g}; });
}

template <typename T>
Var BasicGraph<T>::sub(Var a, Var b) {
    return push(
        {a, b}, [](const Inputs& in) { return elementwise(*in[0], *in[1], minus); },
        [](const Inputs&, const TensorT&, const TensorT& g) { return std::vector<TensorT>{g, scaled(g, -1.0)}; });
}

template <typename T>
Var BasicGraph<T>::mul(Var a, Var b) {
    return push(
        {a, b}, [](const Inputs& in) { return elementwise(*in[0], *in[1], times); },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{elementwise(g, *in[1], times), elementwise(g, *in[0], times)};
        });
}

template <typename T>
Var BasicGraph<T>::scale(Var a, T factor) {
    return push(
        {a}, [factor](const Inputs& in) { return scaled(*in[0], factor); },
        [factor](const Inputs&, const TensorT&, const TensorT& g) { return std::vector<TensorT>{scaled(g, factor)}; });
}

template <typename T>
Var BasicGraph<T>::add_bias(Var x, Var bias) {
    return push(
        {x, bias}, [](const Inputs& in) { return mlwb::add_bias(*in[0], *in[1]); },
        [](const Inputs&, const TensorT&, const TensorT& g) { return std::vector<TensorT>{g, reduce_to_last(g)}; });
}

template <typename T>
Var BasicGraph<T>::activation(Var x, ActivationKind kind) {
    return push(
        {x}, [kind](const Inputs& in) { return apply_activation(kind, *in[0]); },
        [kind](const Inputs& in, const TensorT& out, const TensorT& g) {
            return std::vector<TensorT>{activation_backward(kind, *in[0], out, g)};
        });
}

template <typename T>
Var BasicGraph<T>::conv2d(Var input, Var kernels, std::size_t stride, Padding padding) {
    if (value(input).rank() != 4) {
        throw ShapeError("graph conv2d expects batched input [n,h,w,c], got " + to_string(value(input).shape()));
    }
    return push(
        {input, kernels}, [stride, padding](const Inputs& in) { return mlwb::conv2d(*in[0], *in[1], stride, padding); },
        [stride, padding](const Inputs& in, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{conv2d_input_grad(in[0]->shape(), *in[1], g, stride, padding),
                                        conv2d_kernel_grad(*in[0], in[1]->shape(), g, stride, padding)};
        });
}

template <typename T>
Var BasicGraph<T>::max_pool2d(Var input, std::size_t pool_h, std::size_t pool_w, std::size_t stride, Padding padding) {
    return push(
        {input},
        [=](const Inputs& in) { return mlwb::max_pool2d(*in[0], pool_h, pool_w, stride, padding); },
        [=](const Inputs& in, const TensorT&, const TensorT& g) {
            std::vector<std::size_t> argmax;
            mlwb::max_pool2d(*in[0], pool_h, pool_w, stride, padding, &argmax);
            std::vector<double> acc(in[0]->size(), 0.0);
            for (std::size_t i = 0; i < argmax.size(); ++i) {
                acc[argmax[i]] += g[i];
            }
            return std::vector<TensorT>{TensorT(in[0]->shape(), std::vector<T>(acc.begin(), acc.end()))};
        });
}

template <typename T>
Var BasicGraph<T>::reshape(Var x, Shape shape) {
    return push(
        {x}, [shape](const Inputs& in) { return in[0]->reshaped(shape); },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{g.reshaped(in[0]->shape())};
        });
}

template <typename T>
Var BasicGraph<T>::mul_constant(Var x, TensorT factor) {
    return push(
        {x}, [factor](const Inputs& in) { return elementwise(*in[0], factor, times); },
        [factor](const Inputs&, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{elementwise(g, factor, times)};
        });
}

template <typename T>
Var BasicGraph<T>::add_constant(Var x, TensorT offset) {
    return push(
        {x}, [offset](const Inputs& in) { return elementwise(*in[0], offset, plus); },
        [](const Inputs&, const TensorT&, const TensorT& g) { return std::vector<TensorT>{g}; });
}

template <typename T>
Var BasicGraph<T>::batch_norm_train(Var x, Var gamma, Var beta, double epsilon) {
    return push(
        {x, gamma, beta},
        [epsilon](const Inputs& in) {
            TensorT m, v;
            channel_moments(*in[0], m, v);
            return batch_norm_inference(*in[0], *in[1], *in[2], m, v, epsilon);
        },
        [epsilon](const Inputs& in, const TensorT&, const TensorT& g) {
            const TensorT& xv = *in[0];
            const TensorT& gam = *in[1];
            TensorT m, v;
            channel_moments(xv, m, v);
            const std::size_t c = xv.shape().back();
            const double rows = static_cast<double>(xv.size() / c);
            std::vector<double> inv(c), sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0), dgamma(c, 0.0), dbeta(c, 0.0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                inv[ch] = 1.0 / std::sqrt(static_cast<double>(v[ch]) + epsilon);
            }
            std::vector<double> xhat(xv.size());
            for (std::size_t i = 0; i < xv.size(); ++i) {
                const std::size_t ch = i % c;
                xhat[i] = (static_cast<double>(xv[i]) - m[ch]) * inv[ch];
                const double dxhat = static_cast<double>(g[i]) * gam[ch];
                sum_dxhat[ch] += dxhat;
                sum_dxhat_xhat[ch] += dxhat * xhat[i];
                dgamma[ch] += static_cast<double>(g[i]) * xhat[i];
                dbeta[ch] += g[i];
            }
            std::vector<T> dx(xv.size());
            for (std::size_t i = 0; i < xv.size(); ++i) {
                const std::size_t ch = i % c;
                const double dxhat = static_cast<double>(g[i]) * gam[ch];
                dx[i] = static_cast<T>(inv[ch] / rows *
                                       (rows * dxhat - sum_dxhat[ch] - xhat[i] * sum_dxhat_xhat[ch]));
            }
            return std::vector<TensorT>{TensorT(xv.shape(), std::move(dx)),
                                        TensorT(Shape{c}, std::vector<T>(dgamma.begin(), dgamma.end())),
                                        TensorT(Shape{c}, std::vector<T>(dbeta.begin(), dbeta.end()))};
        });
}

template <typename T>
Var BasicGraph<T>::batch_norm_fixed(Var x, Var gamma, Var beta, TensorT mean, TensorT variance, double epsilon) {
    return push(
        {x, gamma, beta},
        [=](const Inputs& in) { return batch_norm_inference(*in[0], *in[1], *in[2], mean, variance, epsilon); },
        [=](const Inputs& in, const TensorT&, const TensorT& g) {
            const TensorT& xv = *in[0];
            const TensorT& gam = *in[1];
            const std::size_t c = xv.shape().back();
            std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
            std::vector<T> dx(xv.size());
            for (std::size_t i = 0; i < xv.size(); ++i) {
                const std::size_t ch = i % c;
                const double inv = 1.0 / std::sqrt(static_cast<double>(variance[ch]) + epsilon);
                const double xhat = (static_cast<double>(xv[i]) - mean[ch]) * inv;
                dx[i] = static_cast<T>(static_cast<double>(g[i]) * gam[ch] * inv);
                dgamma[ch] += static_cast<double>(g[i]) * xhat;
                dbeta[ch] += g[i];
            }
            return std::vector<TensorT>{TensorT(xv.shape(), std::move(dx)),
                                        TensorT(Shape{c}, std::vector<T>(dgamma.begin(), dgamma.end())),
                                        TensorT(Shape{c}, std::vector<T>(dbeta.begin(), dbeta.end()))};
        });
}

template <typename T>
Var BasicGraph<T>::take_last(Var x, std::size_t index) {
    const TensorT& xv = value(x);
    if (xv.rank() == 0 || index >= xv.shape().back()) {
        throw ShapeError("take_last index " + std::to_string(index) + " out of range for " + to_string(xv.shape()));
    }
    return push(
        {x},
        [index](const Inputs& in) {
            const std::size_t c = in[0]->shape().back();
            Shape s(in[0]->shape().begin(), in[0]->shape().end() - 1);
            std::vector<T> out(in[0]->size() / c);
            for (std::size_t r = 0; r < out.size(); ++r) {
                out[r] = (*in[0])[r * c + index];
            }
            return TensorT(std::move(s), std::move(out));
        },
        [index](const Inputs& in, const TensorT&, const TensorT& g) {
            const std::size_t c = in[0]->shape().back();
            TensorT dx = TensorT::zeros(in[0]->shape());
            for (std::size_t r = 0; r < g.size(); ++r) {
                dx[r * c + index] = g[r];
            }
            return std::vector<TensorT>{std::move(dx)};
        });
}

template <typename T>
Var BasicGraph<T>::sum(Var x) {
    return push(
        {x},
        [](const Inputs& in) {
            double s = 0.0;
            for (T v : in[0]->data()) {
                s += v;
            }
            return TensorT::scalar(static_cast<T>(s));
        },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{filled_like(*in[0], g.item())};
        });
}

template <typename T>
Var BasicGraph<T>::mean(Var x) {
    return push(
        {x},
        [](const Inputs& in) {
            double s = 0.0;
            for (T v : in[0]->data()) {
                s += v;
            }
            return TensorT::scalar(static_cast<T>(s / static_cast<double>(in[0]->size())));
        },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{filled_like(*in[0], static_cast<double>(g.item()) / in[0]->size())};
        });
}

template <typename T>
Var BasicGraph<T>::abs(Var x) {
    return push(
        {x},
        [](const Inputs& in) {
            std::vector<T> out(in[0]->size());
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = std::abs((*in[0])[i]);
            }
            return TensorT(in[0]->shape(), std::move(out));
        },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            std::vector<T> out(g.size());
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T v = (*in[0])[i];
                out[i] = v > T{0} ? g[i] : (v < T{0} ? -g[i] : T{0});
            }
            return std::vector<TensorT>{TensorT(g.shape(), std::move(out))};
        });
}

template <typename T>
Var BasicGraph<T>::square(Var x) {
    return push(
        {x}, [](const Inputs& in) { return elementwise(*in[0], *in[0], times); },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            return std::vector<TensorT>{scaled(elementwise(g, *in[0], times), 2.0)};
        });
}

template <typename T>
Var BasicGraph<T>::mse(Var prediction, Var target) {
    return push(
        {prediction, target}, [](const Inputs& in) { return TensorT::scalar(mse_value(*in[1], *in[0])); },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            const double k = 2.0 * static_cast<double>(g.item()) / static_cast<double>(in[0]->size());
            std::vector<T> dp(in[0]->size()), dt(in[0]->size());
            for (std::size_t i = 0; i < dp.size(); ++i) {
                const double d = static_cast<double>((*in[0])[i]) - static_cast<double>((*in[1])[i]);
                dp[i] = static_cast<T>(k * d);
                dt[i] = static_cast<T>(-k * d);
            }
            return std::vector<TensorT>{TensorT(in[0]->shape(), std::move(dp)), TensorT(in[1]->shape(), std::move(dt))};
        });
}

template <typename T>
Var BasicGraph<T>::categorical_crossentropy(Var probabilities, Var target) {
    return push(
        {probabilities, target},
        [](const Inputs& in) { return TensorT::scalar(categorical_crossentropy_value(*in[1], *in[0])); },
        [](const Inputs& in, const TensorT&, const TensorT& g) {
            const TensorT& p = *in[0];
            const TensorT& y = *in[1];
            const double rows = static_cast<double>(p.size() / p.shape().back());
            const double k = static_cast<double>(g.item()) / rows;
            std::vector<T> dp(p.size()), dy(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double raw = p[i];
                const double clipped = std::clamp(raw, kCrossentropyEpsilon, 1.0 - kCrossentropyEpsilon);
                const bool inside = raw > kCrossentropyEpsilon && raw < 1.0 - kCrossentropyEpsilon;
                dp[i] = inside ? static_cast<T>(-k * static_cast<double>(y[i]) / clipped) : T{0};
                dy[i] = static_cast<T>(-k * std::log(clipped));
            }
            return std::vector<TensorT>{TensorT(p.shape(), std::move(dp)), TensorT(y.shape(), std::move(dy))};
        });
}

template <typename T>
std::vector<typename BasicGraph<T>::TensorT> BasicGraph<T>::gradient(Var loss, std::span<const Var> wrt) const {
    const Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) {
        throw ContractError("gradient needs a scalar loss node, got shape " + to_string(root.value.shape()));
    }
    // Only nodes that depend on a requested leaf need gradients.
    std::vector<bool> needed(loss.id + 1, false);
    for (Var v : wrt) {
        if (v.id >= nodes_.size()) {
            throw ContractError("gradient requested for unknown node " + std::to_string(v.id));
        }
        if (v.id <= loss.id) {
            needed[v.id] = true;
        }
    }
    for (std::size_t i = 0; i <= loss.id; ++i) {
        for (std::size_t op : nodes_[i].operands) {
            if (needed[op]) {
                needed[i] = true;
                break;
            }
        }
    }

    std::vector<std::optional<TensorT>> grads(loss.id + 1);
    grads[loss.id] = TensorT::filled(root.value.shape(), T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!grads[i] || !needed[i] || !n.backward) {
            continue;
        }
        std::vector<TensorT> parts = n.backward(inputs_of(n), n.value, *grads[i]);
        for (std::size_t k = 0; k < n.operands.size(); ++k) {
            const std::size_t op = n.operands[k];
            if (!needed[op]) {
                continue;
            }
            if (!grads[op]) {
                grads[op] = std::move(parts[k]);
            } else {
                grads[op] = elementwise(*grads[op], parts[k], plus);
            }
        }
    }

    std::vector<TensorT> out;
    out.reserve(wrt.size());
    for (Var v : wrt) {
        if (v.id <= loss.id && grads[v.id]) {
            out.push_back(*grads[v.id]);
        } else {
            out.push_back(TensorT::zeros(nodes_[v.id].value.shape()));
        }
    }
    return out;
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace mlwb
