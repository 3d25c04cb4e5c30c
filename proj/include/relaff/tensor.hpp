#pragma once

// Dense float64 arrays with tape-free reverse-mode differentiation.
//
// A Value is a cheap handle onto a node of the computation graph. Operations
// on Values that require gradients record their operands and a backward rule;
// backward() walks the recorded graph once in reverse topological order.
// Graphs are single use: every forward pass builds a fresh one.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace relaff {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Backward rule: reads out.grad and accumulates into the parents that
// require gradients.
using BackwardFn = std::function<void(const Node& out, std::span<const NodePtr> parents)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  bool consumed = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;
  const char* op = "leaf";
};

}  // namespace detail

class Value {
 public:
  // Scalar zero constant.
  Value();

  static Value constant(Shape shape, std::vector<double> data);
  static Value scalar(double v);
  static Value zeros(Shape shape);
  static Value full(Shape shape, double v);
  // A leaf that accumulates gradients.
  static Value parameter(Shape shape, std::vector<double> data);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return node_->data; }
  // Direct mutation is meant for optimizers and finite-difference probes.
  std::span<double> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  // Toggles gradient tracking on a leaf. Throws on interior nodes.
  void set_requires_grad(bool on);
  bool is_leaf() const { return node_->parents.empty() && !node_->backward; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();

  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  const char* op_name() const { return node_->op; }

  bool same_node(const Value& other) const { return node_ == other.node_; }

  // Internal: used by operation implementations and the graph walker.
  explicit Value(detail::NodePtr node) : node_(std::move(node)) {}
  const detail::NodePtr& node() const { return node_; }

 private:
  detail::NodePtr node_;
};

// Disables graph recording on the current thread for its lifetime. Values
// produced inside are constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Builds a result node. When recording is on and some operand requires a
// gradient, the node keeps its operands and backward rule; otherwise it is a
// plain constant. This is the extension point for custom operations.
Value make_op(const char* name, Shape shape, std::vector<double> data,
              std::vector<Value> operands, detail::BackwardFn backward);

// Executed operations reachable from a root, in topological order (operands
// before results).
class Graph {
 public:
  static Graph trace(const Value& root);
  std::span<const Value> nodes() const { return nodes_; }

 private:
  std::vector<Value> nodes_;
};

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
// gradient. The loss must be a single element. The graph is consumed: calling
// backward again on it throws ContractError.
void backward(const Value& loss);

// Same data, no gradient edge.
Value detach(const Value& x);

// Elementwise. Binary forms require equal shapes.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value scale(const Value& x, double c);
Value add_scalar(const Value& x, double c);
Value relu(const Value& x);
Value tanh(const Value& x);
Value exp(const Value& x);
Value log(const Value& x);
Value sqrt(const Value& x);
Value square(const Value& x);

enum class Elementwise { add, sub, mul, relu, scale };
// Dispatching form. `c` is the factor for Elementwise::scale; unary kinds
// ignore `b`.
Value elementwise(Elementwise op, const Value& a, const Value& b = Value(), double c = 1.0);

// Expands a one-element Value to `shape`.
Value broadcast(const Value& scalar, Shape shape);
// x[n×d] + b[d] added to every row.
Value add_row(const Value& x, const Value& b);

Value sum(const Value& x);
Value mean(const Value& x);
// Arithmetic mean over the leading (temporal) axis: [T×D] -> [D].
Value mean_pool(const Value& x);

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& x);
Value reshape(const Value& x, Shape shape);

// Rank-1 concatenation: [n] ++ [m] -> [n+m].
Value concat(const Value& a, const Value& b);
// Rank-1 slice [begin, end).
Value slice(const Value& x, std::size_t begin, std::size_t end);
// Columns [begin, end) of a matrix.
Value slice_cols(const Value& x, std::size_t begin, std::size_t end);
Value concat_cols(const std::vector<Value>& parts);
// Rank-1 row i of a matrix.
Value row(const Value& x, std::size_t i);
// Stacks equal-length rank-1 Values into a matrix.
Value stack_rows(const std::vector<Value>& rows);

// Max-stabilized softmax. Rank 1 uses axis 0; rank 2 accepts axis 0 or 1.
// Throws NumericError on NaN input.
Value softmax(const Value& x, int axis = -1);
// Row-wise log-softmax of a matrix (rank 1 treated as one row).
Value log_softmax(const Value& x);

// Per-row normalization with learned gain and bias, both [d].
Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps = 1e-5);

// Divides each row by its Euclidean norm. A row with norm <= eps_norm raises
// DegenerateVectorError carrying the row index.
Value l2_normalize_rows(const Value& x, double eps_norm = 1e-12);

}  // namespace relaff
