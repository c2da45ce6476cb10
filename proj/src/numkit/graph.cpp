#include "icrl/numkit/graph.hpp"

#include <cmath>

namespace icrl::numkit {

namespace {

constexpr double kGeluCoeff = 0.044715;

double gelu_scalar(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  return 0.5 * x * (1.0 + std::tanh(c * (x + kGeluCoeff * x * x * x)));
}

double gelu_grad_scalar(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  const double u = c * (x + kGeluCoeff * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * kGeluCoeff * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kAddRowVector: return "add_row_vector";
    case OpKind::kMulRowVector: return "mul_row_vector";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kGelu: return "gelu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRows: return "rows";
    case OpKind::kPick: return "pick";
    case OpKind::kCausalSoftmax: return "causal_softmax";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kLogSoftmaxRows: return "log_softmax_rows";
    case OpKind::kLayerNormRows: return "layer_norm_rows";
    case OpKind::kStopGradient: return "stop_gradient";
  }
  return "unknown";
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this)
    throw ContractError("Graph: Var belongs to a different graph");
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError("Graph: invalid node id");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Graph::Node& Graph::node(Var v) {
  return const_cast<Node&>(static_cast<const Graph*>(this)->node(v));
}

Var Graph::input(const std::string& name, Index rows, Index cols) {
  auto it = inputs_.find(name);
  if (it != inputs_.end()) {
    Node& existing = nodes_[static_cast<std::size_t>(it->second)];
    if (existing.rows != rows || existing.cols != cols)
      throw ShapeError("Graph::input: '" + name +
                       "' re-declared with a different shape");
    return Var{this, it->second};
  }
  Node n;
  n.op = OpKind::kInput;
  n.rows = rows;
  n.cols = cols;
  n.name = name;
  n.value = Matrix::Zero(rows, cols);
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  inputs_.emplace(name, id);
  return Var{this, id};
}

Var Graph::param(const std::string& name, Index rows, Index cols) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    Node& existing = nodes_[static_cast<std::size_t>(it->second)];
    if (existing.rows != rows || existing.cols != cols)
      throw ShapeError("Graph::param: '" + name +
                       "' re-declared with a different shape");
    return Var{this, it->second};
  }
  Node n;
  n.op = OpKind::kParam;
  n.rows = rows;
  n.cols = cols;
  n.name = name;
  n.value = Matrix::Zero(rows, cols);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  params_.emplace(name, id);
  return Var{this, id};
}

Var Graph::constant(Matrix value) {
  Node n;
  n.op = OpKind::kConstant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::make_node(OpKind op, Var a, Var b, Index out_rows, Index out_cols,
                     double scalar, Index i0, Index i1) {
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.scalar = scalar;
  n.i0 = i0;
  n.i1 = i1;
  n.rows = out_rows;
  n.cols = out_cols;
  n.value = Matrix::Zero(out_rows, out_cols);
  bool needs = false;
  if (a.valid()) needs = needs || node(a).needs_grad;
  if (b.valid()) needs = needs || node(b).needs_grad;
  n.needs_grad = needs && op != OpKind::kStopGradient;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::forward(const NamedTensors& inputs, const ParamStore& params) {
  for (auto& [name, id] : inputs_) {
    auto it = inputs.find(name);
    if (it == inputs.end())
      throw ContractError("Graph::forward: missing input '" + name + "'");
    Node& n = nodes_[static_cast<std::size_t>(id)];
    require_shape(it->second, n.rows, n.cols, "Graph input '" + name + "'");
    n.value = it->second;
  }
  for (auto& [name, id] : params_) {
    const Matrix& p = params.at(name);
    Node& n = nodes_[static_cast<std::size_t>(id)];
    require_shape(p, n.rows, n.cols, "Graph param '" + name + "'");
    n.value = p;
  }
  for (Node& n : nodes_) {
    if (n.op == OpKind::kInput || n.op == OpKind::kParam ||
        n.op == OpKind::kConstant)
      continue;
    eval_node(n);
    if (check_finite && !n.value.allFinite())
      throw NumericsError(std::string("Graph::forward: non-finite output of ") +
                          op_name(n.op));
  }
  has_forward_ = true;
}

const Matrix& Graph::value(Var v) const {
  if (!has_forward_) throw ContractError("Graph::value: no forward pass yet");
  return node(v).value;
}

void Graph::eval_node(Node& n) {
  const Matrix& A = n.a >= 0 ? nodes_[static_cast<std::size_t>(n.a)].value
                             : n.value;
  switch (n.op) {
    case OpKind::kAdd:
      n.value = A + nodes_[static_cast<std::size_t>(n.b)].value;
      break;
    case OpKind::kSub:
      n.value = A - nodes_[static_cast<std::size_t>(n.b)].value;
      break;
    case OpKind::kMul:
      n.value = A.cwiseProduct(nodes_[static_cast<std::size_t>(n.b)].value);
      break;
    case OpKind::kScale:
      n.value = A * n.scalar;
      break;
    case OpKind::kAddScalar:
      n.value = A.array() + n.scalar;
      break;
    case OpKind::kAddRowVector:
      n.value = A;
      n.value.rowwise() +=
          nodes_[static_cast<std::size_t>(n.b)].value.row(0);
      break;
    case OpKind::kMulRowVector:
      n.value = A.array().rowwise() *
                nodes_[static_cast<std::size_t>(n.b)].value.row(0).array();
      break;
    case OpKind::kMatMul:
      n.value.noalias() = A * nodes_[static_cast<std::size_t>(n.b)].value;
      break;
    case OpKind::kTranspose:
      n.value = A.transpose();
      break;
    case OpKind::kGelu:
      n.value = A.unaryExpr([](double x) { return gelu_scalar(x); });
      break;
    case OpKind::kExp:
      n.value = A.array().exp();
      break;
    case OpKind::kLog:
      n.value = A.array().log();
      break;
    case OpKind::kSquare:
      n.value = A.array().square();
      break;
    case OpKind::kSum:
      n.value(0, 0) = A.sum();
      break;
    case OpKind::kMean:
      n.value(0, 0) = A.mean();
      break;
    case OpKind::kRows:
      n.value = A.middleRows(n.i0, n.i1);
      break;
    case OpKind::kPick:
      n.value(0, 0) = A(n.i0, n.i1);
      break;
    case OpKind::kCausalSoftmax: {
      n.value.setZero();
      for (Index i = 0; i < A.rows(); ++i) {
        const Index width = i + 1;
        const double peak = A.row(i).head(width).maxCoeff();
        Eigen::ArrayXd e = (A.row(i).head(width).array() - peak).exp();
        n.value.row(i).head(width) = (e / e.sum()).matrix();
      }
      break;
    }
    case OpKind::kSoftmaxRows: {
      for (Index i = 0; i < A.rows(); ++i) {
        const double peak = A.row(i).maxCoeff();
        Eigen::ArrayXd e = (A.row(i).array() - peak).exp();
        n.value.row(i) = (e / e.sum()).matrix();
      }
      break;
    }
    case OpKind::kLogSoftmaxRows: {
      for (Index i = 0; i < A.rows(); ++i) {
        const double peak = A.row(i).maxCoeff();
        const double lse =
            peak + std::log((A.row(i).array() - peak).exp().sum());
        n.value.row(i) = A.row(i).array() - lse;
      }
      break;
    }
    case OpKind::kLayerNormRows: {
      if (n.aux.size() == 0) n.aux = Matrix::Zero(A.rows(), 1);
      for (Index i = 0; i < A.rows(); ++i) {
        const double mu = A.row(i).mean();
        const double var =
            (A.row(i).array() - mu).square().sum() / static_cast<double>(A.cols());
        const double inv = 1.0 / std::sqrt(var + n.scalar);
        n.aux(i, 0) = inv;
        n.value.row(i) = (A.row(i).array() - mu) * inv;
      }
      break;
    }
    case OpKind::kStopGradient:
      n.value = A;
      break;
    case OpKind::kInput:
    case OpKind::kParam:
    case OpKind::kConstant:
      break;
  }
}

Matrix& Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.rows() != n.rows || n.grad.cols() != n.cols)
    n.grad = Matrix::Zero(n.rows, n.cols);
  else if (!n.grad_ready)
    n.grad.setZero();
  n.grad_ready = true;
  return n.grad;
}

GradMap Graph::backward(Var loss) {
  if (!has_forward_) throw ContractError("Graph::backward: run forward first");
  Node& loss_node = node(loss);
  if (loss_node.rows != 1 || loss_node.cols != 1)
    throw ContractError("Graph::backward: loss must be a 1x1 scalar");
  // A loss that does not depend on any parameter yields all-zero gradients.
  for (Node& n : nodes_) n.grad_ready = false;
  grad_buffer(loss.id)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_ready || !n.needs_grad) continue;
    backprop_node(n);
  }
  GradMap out;
  for (auto& [name, id] : params_) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad_ready)
      out.emplace(name, n.grad);
    else
      out.emplace(name, Matrix::Zero(n.rows, n.cols));
  }
  return out;
}

void Graph::backprop_node(Node& n) {
  const Matrix& g = n.grad;
  auto in_needs = [&](int id) {
    return id >= 0 && nodes_[static_cast<std::size_t>(id)].needs_grad;
  };
  auto in_value = [&](int id) -> const Matrix& {
    return nodes_[static_cast<std::size_t>(id)].value;
  };
  switch (n.op) {
    case OpKind::kAdd:
      if (in_needs(n.a)) grad_buffer(n.a) += g;
      if (in_needs(n.b)) grad_buffer(n.b) += g;
      break;
    case OpKind::kSub:
      if (in_needs(n.a)) grad_buffer(n.a) += g;
      if (in_needs(n.b)) grad_buffer(n.b) -= g;
      break;
    case OpKind::kMul:
      if (in_needs(n.a)) grad_buffer(n.a) += g.cwiseProduct(in_value(n.b));
      if (in_needs(n.b)) grad_buffer(n.b) += g.cwiseProduct(in_value(n.a));
      break;
    case OpKind::kScale:
      if (in_needs(n.a)) grad_buffer(n.a) += g * n.scalar;
      break;
    case OpKind::kAddScalar:
      if (in_needs(n.a)) grad_buffer(n.a) += g;
      break;
    case OpKind::kAddRowVector:
      if (in_needs(n.a)) grad_buffer(n.a) += g;
      if (in_needs(n.b)) grad_buffer(n.b).row(0) += g.colwise().sum();
      break;
    case OpKind::kMulRowVector:
      if (in_needs(n.a))
        grad_buffer(n.a) +=
            (g.array().rowwise() * in_value(n.b).row(0).array()).matrix();
      if (in_needs(n.b))
        grad_buffer(n.b).row(0) +=
            g.cwiseProduct(in_value(n.a)).colwise().sum();
      break;
    case OpKind::kMatMul:
      if (in_needs(n.a))
        grad_buffer(n.a).noalias() += g * in_value(n.b).transpose();
      if (in_needs(n.b))
        grad_buffer(n.b).noalias() += in_value(n.a).transpose() * g;
      break;
    case OpKind::kTranspose:
      if (in_needs(n.a)) grad_buffer(n.a) += g.transpose();
      break;
    case OpKind::kGelu:
      if (in_needs(n.a))
        grad_buffer(n.a) += g.cwiseProduct(in_value(n.a).unaryExpr(
            [](double x) { return gelu_grad_scalar(x); }));
      break;
    case OpKind::kExp:
      if (in_needs(n.a)) grad_buffer(n.a) += g.cwiseProduct(n.value);
      break;
    case OpKind::kLog:
      if (in_needs(n.a))
        grad_buffer(n.a) += g.cwiseQuotient(in_value(n.a));
      break;
    case OpKind::kSquare:
      if (in_needs(n.a))
        grad_buffer(n.a) += 2.0 * g.cwiseProduct(in_value(n.a));
      break;
    case OpKind::kSum:
      if (in_needs(n.a)) grad_buffer(n.a).array() += g(0, 0);
      break;
    case OpKind::kMean:
      if (in_needs(n.a)) {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        grad_buffer(n.a).array() +=
            g(0, 0) / static_cast<double>(a.rows * a.cols);
      }
      break;
    case OpKind::kRows:
      if (in_needs(n.a)) grad_buffer(n.a).middleRows(n.i0, n.i1) += g;
      break;
    case OpKind::kPick:
      if (in_needs(n.a)) grad_buffer(n.a)(n.i0, n.i1) += g(0, 0);
      break;
    case OpKind::kCausalSoftmax:
      if (in_needs(n.a)) {
        Matrix& da = grad_buffer(n.a);
        for (Index i = 0; i < n.rows; ++i) {
          const Index width = i + 1;
          const auto y = n.value.row(i).head(width).array();
          const auto gi = g.row(i).head(width).array();
          const double dot = (gi * y).sum();
          da.row(i).head(width) += (y * (gi - dot)).matrix();
        }
      }
      break;
    case OpKind::kSoftmaxRows:
      if (in_needs(n.a)) {
        Matrix& da = grad_buffer(n.a);
        for (Index i = 0; i < n.rows; ++i) {
          const auto y = n.value.row(i).array();
          const auto gi = g.row(i).array();
          const double dot = (gi * y).sum();
          da.row(i) += (y * (gi - dot)).matrix();
        }
      }
      break;
    case OpKind::kLogSoftmaxRows:
      if (in_needs(n.a)) {
        Matrix& da = grad_buffer(n.a);
        for (Index i = 0; i < n.rows; ++i) {
          const double gsum = g.row(i).sum();
          da.row(i) +=
              (g.row(i).array() - n.value.row(i).array().exp() * gsum).matrix();
        }
      }
      break;
    case OpKind::kLayerNormRows:
      if (in_needs(n.a)) {
        Matrix& da = grad_buffer(n.a);
        const double d = static_cast<double>(n.cols);
        for (Index i = 0; i < n.rows; ++i) {
          const auto xhat = n.value.row(i).array();
          const auto gi = g.row(i).array();
          const double m1 = gi.sum() / d;
          const double m2 = (gi * xhat).sum() / d;
          da.row(i) += (n.aux(i, 0) * (gi - m1 - xhat * m2)).matrix();
        }
      }
      break;
    case OpKind::kStopGradient:
    case OpKind::kInput:
    case OpKind::kParam:
    case OpKind::kConstant:
      break;
  }
}

namespace {

Graph& same_graph(Var a, Var b) {
  if (!a.valid()) throw ContractError("op: invalid Var");
  if (b.valid() && b.graph != a.graph)
    throw ContractError("op: Vars belong to different graphs");
  return *a.graph;
}

void require_same_shape(Var a, Var b, const char* what) {
  Graph& g = same_graph(a, b);
  if (g.rows(a) != g.rows(b) || g.cols(a) != g.cols(b))
    throw ShapeError(std::string(what) + ": operand shapes differ (" +
                     std::to_string(g.rows(a)) + "x" + std::to_string(g.cols(a)) +
                     " vs " + std::to_string(g.rows(b)) + "x" +
                     std::to_string(g.cols(b)) + ")");
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Graph& g = *a.graph;
  return g.make_node(OpKind::kAdd, a, b, g.rows(a), g.cols(a));
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Graph& g = *a.graph;
  return g.make_node(OpKind::kSub, a, b, g.rows(a), g.cols(a));
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Graph& g = *a.graph;
  return g.make_node(OpKind::kMul, a, b, g.rows(a), g.cols(a));
}

Var scale(Var a, double factor) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kScale, a, Var{}, g.rows(a), g.cols(a), factor);
}

Var add_scalar(Var a, double value) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kAddScalar, a, Var{}, g.rows(a), g.cols(a), value);
}

Var add_row_vector(Var a, Var row) {
  Graph& g = same_graph(a, row);
  if (g.rows(row) != 1 || g.cols(row) != g.cols(a))
    throw ShapeError("add_row_vector: row operand must be 1x" +
                     std::to_string(g.cols(a)));
  return g.make_node(OpKind::kAddRowVector, a, row, g.rows(a), g.cols(a));
}

Var mul_row_vector(Var a, Var row) {
  Graph& g = same_graph(a, row);
  if (g.rows(row) != 1 || g.cols(row) != g.cols(a))
    throw ShapeError("mul_row_vector: row operand must be 1x" +
                     std::to_string(g.cols(a)));
  return g.make_node(OpKind::kMulRowVector, a, row, g.rows(a), g.cols(a));
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  if (g.cols(a) != g.rows(b))
    throw ShapeError("matmul: inner dimensions differ (" +
                     std::to_string(g.cols(a)) + " vs " +
                     std::to_string(g.rows(b)) + ")");
  return g.make_node(OpKind::kMatMul, a, b, g.rows(a), g.cols(b));
}

Var transpose(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kTranspose, a, Var{}, g.cols(a), g.rows(a));
}

Var gelu(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kGelu, a, Var{}, g.rows(a), g.cols(a));
}

Var exp(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kExp, a, Var{}, g.rows(a), g.cols(a));
}

Var log(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kLog, a, Var{}, g.rows(a), g.cols(a));
}

Var square(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kSquare, a, Var{}, g.rows(a), g.cols(a));
}

Var sum(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kSum, a, Var{}, 1, 1);
}

Var mean(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kMean, a, Var{}, 1, 1);
}

Var rows(Var a, Index start, Index count) {
  Graph& g = same_graph(a, Var{});
  if (start < 0 || count <= 0 || start + count > g.rows(a))
    throw ContractError("rows: slice out of range");
  return g.make_node(OpKind::kRows, a, Var{}, count, g.cols(a), 0.0, start,
                     count);
}

Var pick(Var a, Index row, Index col) {
  Graph& g = same_graph(a, Var{});
  if (row < 0 || row >= g.rows(a) || col < 0 || col >= g.cols(a))
    throw ContractError("pick: index out of range");
  return g.make_node(OpKind::kPick, a, Var{}, 1, 1, 0.0, row, col);
}

Var causal_softmax(Var scores) {
  Graph& g = same_graph(scores, Var{});
  if (g.rows(scores) != g.cols(scores))
    throw ShapeError("causal_softmax: scores must be square");
  return g.make_node(OpKind::kCausalSoftmax, scores, Var{}, g.rows(scores),
                     g.cols(scores));
}

Var softmax_rows(Var logits) {
  Graph& g = same_graph(logits, Var{});
  return g.make_node(OpKind::kSoftmaxRows, logits, Var{}, g.rows(logits),
                     g.cols(logits));
}

Var log_softmax_rows(Var logits) {
  Graph& g = same_graph(logits, Var{});
  return g.make_node(OpKind::kLogSoftmaxRows, logits, Var{}, g.rows(logits),
                     g.cols(logits));
}

Var layer_norm_rows(Var a, double eps) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kLayerNormRows, a, Var{}, g.rows(a), g.cols(a),
                     eps);
}

Var stop_gradient(Var a) {
  Graph& g = same_graph(a, Var{});
  return g.make_node(OpKind::kStopGradient, a, Var{}, g.rows(a), g.cols(a));
}

}  // namespace icrl::numkit
