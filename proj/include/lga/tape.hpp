#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lga/tensor.hpp"

namespace lga {

using NodeId = std::uint32_t;

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Scale,
  AddConst,
  Neg,
  Exp,
  Tanh,
  Relu,
  Square,
  Sum,
  Mean,
  Reshape,
  Concat,
  BroadcastTo,
  Max,
  SoftmaxCE,
  SmoothL1,
};

const char* op_name(Op op);

// Per-op attributes; only the fields relevant to the op kind are read.
struct Attrs {
  double scalar = 0.0;              // Scale factor / AddConst constant / SmoothL1 beta
  int axis = -1;                    // Sum/Mean/Concat axis; -1 means "all" for reductions
  int label = -1;                   // SoftmaxCE class index
  std::vector<std::size_t> shape;   // Reshape / BroadcastTo target shape
  Tensor aux;                       // SmoothL1 regression target
  bool has_aux = false;
};

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  Attrs attrs;
  Tensor value;
  bool requires_grad;
};

using GradientMap = std::unordered_map<NodeId, Tensor>;

// Records an eagerly-evaluated computation graph; topological order is
// construction order. Values are immutable once recorded.
class Tape {
 public:
  NodeId leaf(Tensor value, bool requires_grad = false);
  NodeId apply(Op op, const std::vector<NodeId>& inputs, Attrs attrs = {});

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  // Reverse sweep from a scalar root; returns d(root)/d(leaf) for every
  // gradient-requiring leaf. Fan-out accumulates additively.
  GradientMap backward(NodeId root) const;

  // Same sweep, but adds scale * d(root)/d(leaf) into caller-owned buffers.
  // Used by the training loop to accumulate batch gradients without
  // per-instance map/tensor churn. Each sink buffer must match its leaf size.
  void backward_accumulate(NodeId root,
                           const std::vector<std::pair<NodeId, double*>>& sinks,
                           double scale) const;

  // Branch decisions of every Relu (input > 0) and Max (lhs >= rhs) element,
  // in tape order. Used by the gradient checker to detect kink crossings.
  std::vector<std::uint8_t> activation_pattern() const;

  // Convenience builders.
  NodeId add(NodeId a, NodeId b) { return apply(Op::Add, {a, b}); }
  NodeId sub(NodeId a, NodeId b) { return apply(Op::Sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return apply(Op::Mul, {a, b}); }
  NodeId div(NodeId a, NodeId b) { return apply(Op::Div, {a, b}); }
  NodeId matmul(NodeId a, NodeId b) { return apply(Op::MatMul, {a, b}); }
  NodeId scale(NodeId a, double c) { return apply(Op::Scale, {a}, scalar_attr(c)); }
  NodeId add_const(NodeId a, double c) { return apply(Op::AddConst, {a}, scalar_attr(c)); }
  NodeId neg(NodeId a) { return apply(Op::Neg, {a}); }
  NodeId exp(NodeId a) { return apply(Op::Exp, {a}); }
  NodeId tanh(NodeId a) { return apply(Op::Tanh, {a}); }
  NodeId relu(NodeId a) { return apply(Op::Relu, {a}); }
  NodeId square(NodeId a) { return apply(Op::Square, {a}); }
  NodeId sum(NodeId a, int axis = -1) { return apply(Op::Sum, {a}, axis_attr(axis)); }
  NodeId mean(NodeId a, int axis = -1) { return apply(Op::Mean, {a}, axis_attr(axis)); }
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);
  NodeId concat(const std::vector<NodeId>& parts, int axis);
  NodeId broadcast_to(NodeId a, std::vector<std::size_t> shape);
  NodeId maximum(NodeId a, NodeId b) { return apply(Op::Max, {a, b}); }

 private:
  static Attrs scalar_attr(double c) {
    Attrs a;
    a.scalar = c;
    return a;
  }
  static Attrs axis_attr(int axis) {
    Attrs a;
    a.axis = axis;
    return a;
  }

  Tensor forward(Op op, const std::vector<NodeId>& inputs, const Attrs& attrs) const;
  void sweep(NodeId root, std::vector<std::vector<double>>& grad,
             std::vector<bool>& live, const std::vector<double*>& external,
             double seed) const;

  std::vector<Node> nodes_;
};

// Stable −log softmax(logits)[label]; adjoint is softmax − one_hot(label).
NodeId softmax_cross_entropy(Tape& tape, NodeId logits, int label);

// Sum of per-component Huber terms: 0.5 d^2/beta if |d|<beta else |d|−0.5 beta.
NodeId smooth_l1(Tape& tape, NodeId pred, const Tensor& target, double beta);

}  // namespace lga
