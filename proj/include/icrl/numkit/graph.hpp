#pragma once

#include <string>
#include <vector>

#include "icrl/numkit/tensor.hpp"

namespace icrl::numkit {

class Graph;

// Lightweight handle to a node in a Graph.  Copyable; valid as long as the
// owning Graph is alive.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
};

enum class OpKind {
  kInput,
  kParam,
  kConstant,
  kAdd,
  kSub,
  kMul,        // elementwise
  kScale,      // multiply by compile-time scalar
  kAddScalar,  // add compile-time scalar
  kAddRowVector,
  kMulRowVector,
  kMatMul,
  kTranspose,
  kGelu,
  kExp,
  kLog,
  kSquare,
  kSum,   // -> 1x1
  kMean,  // -> 1x1
  kRows,  // contiguous row slice
  kPick,  // single entry -> 1x1
  kCausalSoftmax,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kLayerNormRows,
  kStopGradient,
};

const char* op_name(OpKind op);

// A static computation graph over dense matrices.  Shapes are fixed at
// build time; the same graph is re-run many times with different bindings
// for its named inputs and parameters, so buffers are allocated once.
//
// Typical use:
//   Graph g;
//   Var x = g.input("x", 1, 3);
//   Var w = g.param("w", 3, 1);
//   Var loss = mean(square(matmul(x, w)));
//   g.forward({{"x", ...}}, params);
//   GradMap grads = g.backward(loss);
//
// A Graph instance is a single-thread workspace: share parameters across
// threads read-only, but give each thread its own Graph.
class Graph {
 public:
  // If true (default), every node's forward output is checked for NaN/Inf
  // and a NumericsError naming the op is thrown.  Hot training loops may
  // disable this and instead check the loss each step.
  bool check_finite = true;

  // Declares a named runtime input of fixed shape.  Re-declaring the same
  // name returns the original node (shape must match).
  Var input(const std::string& name, Index rows, Index cols);

  // Declares a named learnable parameter of fixed shape; bound from the
  // ParamStore passed to forward().  Re-declaring returns the original node.
  Var param(const std::string& name, Index rows, Index cols);

  // Embeds a fixed tensor into the graph (no gradient).
  Var constant(Matrix value);

  // Runs the whole graph with the given bindings.  Throws ContractError on
  // missing names, ShapeError on shape mismatches.
  void forward(const NamedTensors& inputs, const ParamStore& params);

  // Value of a node from the most recent forward().
  const Matrix& value(Var v) const;

  // Reverse-mode sweep from a scalar (1x1) node.  Returns gradients for all
  // declared parameters (zero matrices for parameters the loss does not
  // reach).  Requires a prior forward().
  GradMap backward(Var loss);

  Index rows(Var v) const { return node(v).rows; }
  Index cols(Var v) const { return node(v).cols; }
  std::size_t node_count() const { return nodes_.size(); }

  // Internal: used by the op free functions.
  Var make_node(OpKind op, Var a, Var b, Index out_rows, Index out_cols,
                double scalar = 0.0, Index i0 = 0, Index i1 = 0);

 private:
  struct Node {
    OpKind op;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    Index i0 = 0;
    Index i1 = 0;
    Index rows = 0;
    Index cols = 0;
    std::string name;
    Matrix value;
    Matrix aux;  // op-specific forward state (e.g. layer-norm inverse stddev)
    Matrix grad;
    bool needs_grad = false;
    bool grad_ready = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  void eval_node(Node& n);
  void backprop_node(Node& n);
  Matrix& grad_buffer(int id);

  std::vector<Node> nodes_;
  std::map<std::string, int> inputs_;
  std::map<std::string, int> params_;
  bool has_forward_ = false;
};

// Operation builders.  All shape checking happens here, at build time.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var add_row_vector(Var a, Var row);
Var mul_row_vector(Var a, Var row);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var gelu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var rows(Var a, Index start, Index count);
Var pick(Var a, Index row, Index col);
Var causal_softmax(Var scores);
Var softmax_rows(Var logits);
Var log_softmax_rows(Var logits);
Var layer_norm_rows(Var a, double eps = 1e-5);
Var stop_gradient(Var a);

}  // namespace icrl::numkit
