#pragma once

#include <map>
#include <string>
#include <vector>

#include "cips/matrix.hpp"

namespace cips {

using NodeId = std::size_t;

enum class OpKind {
    Input,
    Param,
    Constant,
    MatMul,
    Add,
    AddRow,   // broadcast a 1 x C bias over the rows of the first input
    Sub,
    Mul,      // elementwise
    Div,      // elementwise
    Affine,   // a * x + b elementwise, a and b compile-time constants
    Softplus,
    Elu,
    Sigmoid,
    Exp,
    Log,
    Sqrt,
    Square,
    Sum,           // reduce to 1 x 1
    Concat,        // column-wise concatenation
    LogSumExpRow,  // per-row logsumexp, R x C -> R x 1
};

/// Reverse-mode differentiation over an explicitly built computation graph.
/// Nodes are matrix-valued; the loss node must be 1 x 1. Construction order
/// is the topological order (an op may only reference earlier nodes).
class Graph {
public:
    NodeId input(std::string name, std::size_t rows, std::size_t cols);
    NodeId param(std::string name, Matrix init);
    NodeId constant(Matrix value, std::string name = "const");

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId add_row(NodeId a, NodeId row);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId affine(NodeId x, double a, double b);
    NodeId softplus(NodeId x);
    NodeId elu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId sqrt(NodeId x);
    NodeId square(NodeId x);
    NodeId sum(NodeId x);
    NodeId concat(const std::vector<NodeId>& parts);
    NodeId logsumexp_row(NodeId x);

    void set_loss(NodeId id);
    NodeId loss_node() const { return loss_; }

    void set_value(NodeId id, Matrix value);
    const Matrix& value(NodeId id) const;
    const Matrix& gradient(NodeId id) const;

    /// Forward evaluation of every node. Throws std::runtime_error naming the
    /// node when a non-finite intermediate appears.
    void forward();
    /// Reverse sweep from the loss node; call after forward().
    void backward();
    /// forward() + backward(); returns the scalar loss.
    double forward_backward();

    /// Name -> gradient for every Param node (valid after backward()).
    std::map<std::string, Matrix> param_gradients() const;
    /// Name -> node id for every Param node.
    const std::map<std::string, NodeId>& params() const { return params_; }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Matrix value;
        Matrix grad;
        std::string name;
        double a = 0.0;  // Affine coefficients
        double b = 0.0;
    };

    NodeId push(Node n);
    void check_id(NodeId id) const;
    void eval_node(std::size_t i);
    void backprop_node(std::size_t i);

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> params_;
    NodeId loss_ = static_cast<NodeId>(-1);
    bool evaluated_ = false;
};

}  // namespace cips
