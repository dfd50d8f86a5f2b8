#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mlwb/tensor/activation.hpp"
#include "mlwb/tensor/ops.hpp"
#include "mlwb/tensor/tensor.hpp"

namespace mlwb {

/// Handle to a node of a BasicGraph.
struct Var {
    std::size_t id = 0;
    bool operator==(const Var&) const = default;
};

/// Acyclic computation record with reverse-mode differentiation.
///
/// Nodes are evaluated eagerly when created. Operands always precede their
/// users, so creation order is a topological order. Leaves can be replaced with
/// set_leaf() and the interior recomputed with evaluate(); recomputing an
/// unchanged graph reproduces identical values.
template <typename T>
class BasicGraph {
public:
    using TensorT = BasicTensor<T>;

    BasicGraph() = default;
    BasicGraph(const BasicGraph&) = delete;
    BasicGraph& operator=(const BasicGraph&) = delete;
    BasicGraph(BasicGraph&&) noexcept = default;
    BasicGraph& operator=(BasicGraph&&) noexcept = default;

    Var leaf(TensorT value);
    void set_leaf(Var v, TensorT value);
    void evaluate();

    const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    bool is_leaf(Var v) const { return !nodes_.at(v.id).forward; }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, T factor);
    Var add_bias(Var x, Var bias);
    Var activation(Var x, ActivationKind kind);
    /// Batched input [n,h,w,c], kernels [kh,kw,c,f].
    Var conv2d(Var input, Var kernels, std::size_t stride, Padding padding);
    Var max_pool2d(Var input, std::size_t pool_h, std::size_t pool_w, std::size_t stride, Padding padding);
    Var reshape(Var x, Shape shape);
    Var mul_constant(Var x, TensorT factor);
    Var add_constant(Var x, TensorT offset);
    /// Normalizes with the batch's own per-channel statistics (training mode).
    Var batch_norm_train(Var x, Var gamma, Var beta, double epsilon);
    /// Normalizes with fixed statistics (inference mode); gamma/beta stay differentiable.
    Var batch_norm_fixed(Var x, Var gamma, Var beta, TensorT mean, TensorT variance, double epsilon);
    /// Selects `index` along the last axis; the result drops that axis.
    Var take_last(Var x, std::size_t index);
    Var sum(Var x);
    Var mean(Var x);
    Var abs(Var x);
    Var square(Var x);
    Var mse(Var prediction, Var target);
    Var categorical_crossentropy(Var probabilities, Var target);

    /// d(loss)/d(leaf) for every leaf in `wrt`, each shaped like its leaf. `loss`
    /// must hold exactly one element (ContractError otherwise). Leaves not
    /// connected to the loss get zero gradients.
    std::vector<TensorT> gradient(Var loss, std::span<const Var> wrt) const;

private:
    using Inputs = std::vector<const TensorT*>;
    using Forward = std::function<TensorT(const Inputs&)>;
    using Backward = std::function<std::vector<TensorT>(const Inputs&, const TensorT& out, const TensorT& grad)>;

    struct Node {
        TensorT value;
        std::vector<std::size_t> operands;
        Forward forward;
        Backward backward;
    };

    Var push(std::vector<Var> operands, Forward forward, Backward backward);
    Inputs inputs_of(const Node& n) const;

    std::vector<Node> nodes_;
};

extern template class BasicGraph<float>;
extern template class BasicGraph<double>;

using Graph = BasicGraph<float>;

}  // namespace mlwb
