#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lori/matrix.hpp"

namespace lori {

using NodeId = std::int32_t;

/// Reverse-mode autodiff over a fixed op set, define-by-run: each op
/// computes its value when recorded. Nodes only reference earlier nodes, so
/// creation order is a topological order and backward is a single reverse
/// sweep with deterministic accumulation.
class GradGraph {
public:
    /// Non-trainable input; receives no gradient.
    NodeId constant(Matrix value);
    /// Trainable parameter; backward() reports a gradient of the same shape.
    NodeId leaf(Matrix value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId transpose(NodeId a);
    NodeId relu(NodeId a);
    /// Row-wise softmax (max-shifted).
    NodeId softmax_rows(NodeId a);
    /// Column means: n x c -> 1 x c.
    NodeId mean_rows(NodeId a);
    /// Mean over all entries of (pred - target)^2; scalar output.
    NodeId mse(NodeId pred, NodeId target);
    /// Mean over rows of -log softmax(logits[:, :n_classes])[label].
    /// Columns past n_classes carry zero gradient. Scalar output.
    NodeId cross_entropy(NodeId logits, std::vector<int> labels, std::size_t n_classes);

    const Matrix& value(NodeId id) const { return nodes_[checked(id)].value; }
    bool is_scalar(NodeId id) const;
    double scalar(NodeId id) const;
    std::size_t node_count() const { return nodes_.size(); }

    /// Re-evaluates every node in recording order from the current leaf and
    /// constant values. With unchanged leaves this reproduces all values
    /// exactly.
    void recompute();
    /// Overwrites a leaf/constant value (same shape) for recompute().
    void set_value(NodeId id, Matrix value);

    /// Exact reverse-mode gradients of a scalar loss for every leaf.
    /// Leaves not reachable from the loss get zero gradients.
    std::unordered_map<NodeId, Matrix> backward(NodeId loss) const;

private:
    enum class Op {
        kConstant,
        kLeaf,
        kMatmul,
        kAdd,
        kHadamard,
        kScale,
        kTranspose,
        kRelu,
        kSoftmaxRows,
        kMeanRows,
        kMse,
        kCrossEntropy,
    };

    struct Node {
        Op op;
        NodeId a = -1;
        NodeId b = -1;
        double c = 0.0;
        std::vector<int> labels;
        std::size_t n_classes = 0;
        Matrix value;
    };

    NodeId push(Node n);
    std::size_t checked(NodeId id) const;
    Matrix eval(const Node& n) const;

    std::vector<Node> nodes_;
};

} // namespace lori
