#include "relaff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

using detail::Node;
using detail::NodePtr;

namespace {

thread_local int no_grad_depth = 0;

void require_same_shape(const char* op, const Value& a, const Value& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
}

void require_rank(const char* op, const Value& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(
        fmt::format("{}: expected rank {}, got shape {}", op, rank, shape_string(x.shape())));
  }
}

// Accumulates `g` into a parent's gradient when it tracks one.
inline void accumulate(const NodePtr& p, std::size_t i, double g) {
  if (p->requires_grad) p->grad[i] += g;
}

template <class F>
Value unary(const char* name, const Value& x, F f, std::function<double(double x, double y)> dfdx) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_op(name, x.shape(), std::move(out), {x},
                 [dfdx = std::move(dfdx)](const Node& o, std::span<const NodePtr> ps) {
                   const auto& p = ps[0];
                   for (std::size_t i = 0; i < o.data.size(); ++i) {
                     p->grad[i] += o.grad[i] * dfdx(p->data[i], o.data[i]);
                   }
                 });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, "x"));
}

Value::Value() : Value(constant({1}, {0.0})) {}

Value Value::constant(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError(fmt::format("Value: shape {} holds {} elements, data has {}",
                                     shape_string(shape), shape_size(shape), data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Value(std::move(node));
}

Value Value::scalar(double v) { return constant({1}, {v}); }

Value Value::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Value Value::full(Shape shape, double v) {
  std::vector<double> data(shape_size(shape), v);
  return constant(std::move(shape), std::move(data));
}

Value Value::parameter(Shape shape, std::vector<double> data) {
  Value v = constant(std::move(shape), std::move(data));
  v.set_requires_grad(true);
  return v;
}

std::size_t Value::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError(fmt::format("axis {} out of range for {}", axis, shape_string(shape())));
  }
  return shape()[axis];
}

void Value::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("set_requires_grad: only leaves can change tracking");
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->data.size(), 0.0);
  } else {
    node_->grad.clear();
  }
}

void Value::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

double Value::item() const {
  if (size() != 1) {
    throw DimensionError(fmt::format("item: expected one element, shape {}", shape_string(shape())));
  }
  return node_->data[0];
}

double Value::at(std::size_t i) const { return node_->data.at(i); }

double Value::at(std::size_t i, std::size_t j) const {
  require_rank("at", *this, 2);
  if (i >= shape()[0] || j >= shape()[1]) throw DimensionError("at: index out of range");
  return node_->data[i * shape()[1] + j];
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

Value make_op(const char* name, Shape shape, std::vector<double> data, std::vector<Value> operands,
              detail::BackwardFn backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = name;
  bool track = grad_enabled() && std::any_of(operands.begin(), operands.end(),
                                             [](const Value& v) { return v.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->grad.assign(node->data.size(), 0.0);
    node->parents.reserve(operands.size());
    for (auto& v : operands) node->parents.push_back(v.node());
    node->backward = std::move(backward_fn);
  }
  return Value(std::move(node));
}

Graph Graph::trace(const Value& root) {
  Graph g;
  if (!root.requires_grad()) return g;
  // Iterative post-order DFS; children visited in operand order so the
  // resulting order is deterministic.
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const NodePtr& p = node->parents[next++];
      if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(p, 0);
    } else {
      g.nodes_.emplace_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void backward(const Value& loss) {
  if (loss.size() != 1) {
    throw ContractError(
        fmt::format("backward: loss must be a scalar, got shape {}", shape_string(loss.shape())));
  }
  if (loss.node()->consumed) {
    throw ContractError("backward: graph already consumed; run a new forward pass");
  }
  if (!loss.requires_grad()) {
    loss.node()->consumed = true;
    return;
  }
  Graph graph = Graph::trace(loss);
  auto nodes = graph.nodes();
  for (const auto& v : nodes) {
    if (v.node()->consumed) {
      throw ContractError("backward: graph already consumed; run a new forward pass");
    }
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node& n = *it->node();
    if (n.backward) {
      n.backward(n, n.parents);
      n.backward = nullptr;
      n.parents.clear();
      n.consumed = true;
    }
  }
  loss.node()->consumed = true;
}

Value detach(const Value& x) {
  auto data = x.data();
  return Value::constant(x.shape(), std::vector<double>(data.begin(), data.end()));
}

// ---------------------------------------------------------------------------
// Elementwise

Value add(const Value& a, const Value& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                     accumulate(ps[0], i, o.grad[i]);
                     accumulate(ps[1], i, o.grad[i]);
                   }
                 });
}

Value sub(const Value& a, const Value& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op("sub", a.shape(), std::move(out), {a, b},
                 [](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                     accumulate(ps[0], i, o.grad[i]);
                     accumulate(ps[1], i, -o.grad[i]);
                   }
                 });
}

Value mul(const Value& a, const Value& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op("mul", a.shape(), std::move(out), {a, b},
                 [](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                     accumulate(ps[0], i, o.grad[i] * ps[1]->data[i]);
                     accumulate(ps[1], i, o.grad[i] * ps[0]->data[i]);
                   }
                 });
}

Value div(const Value& a, const Value& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return make_op("div", a.shape(), std::move(out), {a, b},
                 [](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                     double bi = ps[1]->data[i];
                     accumulate(ps[0], i, o.grad[i] / bi);
                     accumulate(ps[1], i, -o.grad[i] * o.data[i] / bi);
                   }
                 });
}

Value scale(const Value& x, double c) {
  return unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Value add_scalar(const Value& x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Value relu(const Value& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Value tanh(const Value& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Value exp(const Value& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Value log(const Value& x) {
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Value sqrt(const Value& x) {
  // Subgradient 0 at the origin so that a loss sitting exactly at zero
  // yields zero gradients instead of inf·0.
  return unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Value square(const Value& x) {
  return unary("square", x, [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Value elementwise(Elementwise op, const Value& a, const Value& b, double c) {
  switch (op) {
    case Elementwise::add: return add(a, b);
    case Elementwise::sub: return sub(a, b);
    case Elementwise::mul: return mul(a, b);
    case Elementwise::relu: return relu(a);
    case Elementwise::scale: return scale(a, c);
  }
  throw ContractError("elementwise: unknown op");
}

// ---------------------------------------------------------------------------
// Broadcasting and reductions

Value broadcast(const Value& s, Shape shape) {
  if (s.size() != 1) {
    throw DimensionError(
        fmt::format("broadcast: source must hold one element, got {}", shape_string(s.shape())));
  }
  std::vector<double> out(shape_size(shape), s.data()[0]);
  return make_op("broadcast", std::move(shape), std::move(out), {s},
                 [](const Node& o, std::span<const NodePtr> ps) {
                   double acc = 0.0;
                   for (double g : o.grad) acc += g;
                   ps[0]->grad[0] += acc;
                 });
}

Value add_row(const Value& x, const Value& b) {
  require_rank("add_row", x, 2);
  require_rank("add_row", b, 1);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (b.dim(0) != d) {
    throw DimensionError(fmt::format("add_row: shape mismatch {} vs {}", shape_string(x.shape()),
                                     shape_string(b.shape())));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.data()[i * d + j] + b.data()[j];
  return make_op("add_row", x.shape(), std::move(out), {x, b},
                 [n, d](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t j = 0; j < d; ++j) {
                       double g = o.grad[i * d + j];
                       accumulate(ps[0], i * d + j, g);
                       accumulate(ps[1], j, g);
                     }
                   }
                 });
}

Value sum(const Value& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_op("sum", {1}, {acc}, {x}, [](const Node& o, std::span<const NodePtr> ps) {
    for (double& g : ps[0]->grad) g += o.grad[0];
  });
}

Value mean(const Value& x) {
  if (x.size() == 0) throw ContractError("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Value mean_pool(const Value& x) {
  require_rank("mean_pool", x, 2);
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (t == 0) throw ContractError("mean_pool: empty temporal axis");
  const double inv = 1.0 / static_cast<double>(t);
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.data()[i * d + j];
  for (double& v : out) v *= inv;
  return make_op("mean_pool", {d}, std::move(out), {x},
                 [t, d, inv](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < t; ++i)
                     for (std::size_t j = 0; j < d; ++j) ps[0]->grad[i * d + j] += o.grad[j] * inv;
                 });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape manipulation

Value matmul(const Value& a, const Value& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError(fmt::format("matmul: inner dimensions differ, {} vs {}",
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [m, k, n](const Node& o, std::span<const NodePtr> ps) {
                   const NodePtr& A = ps[0];
                   const NodePtr& B = ps[1];
                   const double* g = o.grad.data();
                   if (A->requires_grad) {
                     // dA = dOut · Bᵀ
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         const double* brow = B->data.data() + p * n;
                         const double* grow = g + i * n;
                         for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                         A->grad[i * k + p] += acc;
                       }
                   }
                   if (B->requires_grad) {
                     // dB = Aᵀ · dOut
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const double av = A->data[i * k + p];
                         double* bgrow = B->grad.data() + p * n;
                         const double* grow = g + i * n;
                         for (std::size_t j = 0; j < n; ++j) bgrow[j] += av * grow[j];
                       }
                   }
                 });
}

Value transpose(const Value& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.data()[i * c + j];
  return make_op("transpose", {c, r}, std::move(out), {x},
                 [r, c](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < c; ++j) ps[0]->grad[i * c + j] += o.grad[j * r + i];
                 });
}

Value reshape(const Value& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError(fmt::format("reshape: cannot view {} as {}", shape_string(x.shape()),
                                     shape_string(shape)));
  }
  auto d = x.data();
  return make_op("reshape", std::move(shape), std::vector<double>(d.begin(), d.end()), {x},
                 [](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) ps[0]->grad[i] += o.grad[i];
                 });
}

Value concat(const Value& a, const Value& b) {
  if (a.rank() != 1 || b.rank() != 1) {
    throw DimensionError(fmt::format("concat: both operands must be rank 1, got {} and {}",
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
  const std::size_t na = a.size();
  std::vector<double> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const std::size_t n = out.size();
  return make_op("concat", {n}, std::move(out), {a, b},
                 [na](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) {
                     if (i < na) {
                       accumulate(ps[0], i, o.grad[i]);
                     } else {
                       accumulate(ps[1], i - na, o.grad[i]);
                     }
                   }
                 });
}

Value slice(const Value& x, std::size_t begin, std::size_t end) {
  require_rank("slice", x, 1);
  if (begin > end || end > x.size()) {
    throw DimensionError(
        fmt::format("slice: [{}, {}) out of range for {}", begin, end, shape_string(x.shape())));
  }
  std::vector<double> out(x.data().begin() + begin, x.data().begin() + end);
  return make_op("slice", {end - begin}, std::move(out), {x},
                 [begin](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) ps[0]->grad[begin + i] += o.grad[i];
                 });
}

Value slice_cols(const Value& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (begin > end || end > c) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) out of range for {}", begin, end,
                                     shape_string(x.shape())));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.data()[i * c + begin + j];
  return make_op("slice_cols", {r, w}, std::move(out), {x},
                 [r, c, w, begin](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < w; ++j)
                       ps[0]->grad[i * c + begin + j] += o.grad[i * w + j];
                 });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t r = parts[0].dim(0);
  std::vector<std::size_t> offsets;
  std::size_t c = 0;
  for (const auto& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != r) {
      throw DimensionError(fmt::format("concat_cols: row count mismatch {} vs {}",
                                       shape_string(parts[0].shape()), shape_string(p.shape())));
    }
    offsets.push_back(c);
    c += p.dim(1);
  }
  std::vector<double> out(r * c);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * c + offsets[k] + j] = parts[k].data()[i * w + j];
  }
  return make_op("concat_cols", {r, c}, std::move(out), parts,
                 [r, c, offsets](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t k = 0; k < ps.size(); ++k) {
                     if (!ps[k]->requires_grad) continue;
                     const std::size_t w = ps[k]->shape[1];
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < w; ++j)
                         ps[k]->grad[i * w + j] += o.grad[i * c + offsets[k] + j];
                   }
                 });
}

Value row(const Value& x, std::size_t i) {
  require_rank("row", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (i >= r) throw DimensionError(fmt::format("row: index {} out of range for {}", i, shape_string(x.shape())));
  std::vector<double> out(x.data().begin() + i * c, x.data().begin() + (i + 1) * c);
  return make_op("row", {c}, std::move(out), {x}, [i, c](const Node& o, std::span<const NodePtr> ps) {
    for (std::size_t j = 0; j < c; ++j) ps[0]->grad[i * c + j] += o.grad[j];
  });
}

Value stack_rows(const std::vector<Value>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  const std::size_t c = rows[0].size();
  for (const auto& r : rows) {
    require_rank("stack_rows", r, 1);
    if (r.size() != c) {
      throw DimensionError(fmt::format("stack_rows: row length mismatch {} vs {}",
                                       shape_string(rows[0].shape()), shape_string(r.shape())));
    }
  }
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (const auto& r : rows) out.insert(out.end(), r.data().begin(), r.data().end());
  return make_op("stack_rows", {rows.size(), c}, std::move(out), rows,
                 [c](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t k = 0; k < ps.size(); ++k) {
                     if (!ps[k]->requires_grad) continue;
                     for (std::size_t j = 0; j < c; ++j) ps[k]->grad[j] += o.grad[k * c + j];
                   }
                 });
}

// ---------------------------------------------------------------------------
// Softmax family

Value softmax(const Value& x, int axis) {
  for (double v : x.data()) {
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  }
  std::size_t outer, len, stride;
  if (x.rank() == 1) {
    if (axis != -1 && axis != 0) throw DimensionError("softmax: rank-1 input only has axis 0");
    outer = 1;
    len = x.dim(0);
    stride = 1;
  } else if (x.rank() == 2) {
    if (axis == 0) {
      outer = x.dim(1);
      len = x.dim(0);
      stride = x.dim(1);
    } else if (axis == 1 || axis == -1) {
      outer = x.dim(0);
      len = x.dim(1);
      stride = 1;
    } else {
      throw DimensionError("softmax: axis must be 0 or 1 for a matrix");
    }
  } else {
    throw DimensionError(fmt::format("softmax: unsupported shape {}", shape_string(x.shape())));
  }
  // Element k of group g lives at base(g) + k*stride.
  const std::size_t group_step = (stride == 1) ? len : 1;
  std::vector<double> out(x.size());
  for (std::size_t g = 0; g < outer; ++g) {
    const std::size_t base = g * group_step;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, x.data()[base + k * stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      double e = std::exp(x.data()[base + k * stride] - mx);
      out[base + k * stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[base + k * stride] /= z;
  }
  return make_op("softmax", x.shape(), std::move(out), {x},
                 [outer, len, stride, group_step](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t g = 0; g < outer; ++g) {
                     const std::size_t base = g * group_step;
                     double dot = 0.0;
                     for (std::size_t k = 0; k < len; ++k) {
                       const std::size_t i = base + k * stride;
                       dot += o.grad[i] * o.data[i];
                     }
                     for (std::size_t k = 0; k < len; ++k) {
                       const std::size_t i = base + k * stride;
                       ps[0]->grad[i] += o.data[i] * (o.grad[i] - dot);
                     }
                   }
                 });
}

Value log_softmax(const Value& x) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw DimensionError(fmt::format("log_softmax: unsupported shape {}", shape_string(x.shape())));
  }
  for (double v : x.data()) {
    if (std::isnan(v)) throw NumericError("log_softmax: NaN input");
  }
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t cols = x.rank() == 1 ? x.dim(0) : x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = x.data().data() + i * cols;
    double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = in[j] - lse;
  }
  return make_op("log_softmax", x.shape(), std::move(out), {x},
                 [rows, cols](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < rows; ++i) {
                     double gs = 0.0;
                     for (std::size_t j = 0; j < cols; ++j) gs += o.grad[i * cols + j];
                     for (std::size_t j = 0; j < cols; ++j) {
                       const std::size_t k = i * cols + j;
                       ps[0]->grad[k] += o.grad[k] - std::exp(o.data[k]) * gs;
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Normalizations

Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError(fmt::format("layer_norm: gain/bias must be [{}], got {} and {}", d,
                                     shape_string(gain.shape()), shape_string(bias.shape())));
  }
  std::vector<double> xhat(x.size()), inv_std(n), out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = x.data().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (in[j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gain.data()[j] + bias.data()[j];
    }
  }
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Node& o,
                                                                   std::span<const NodePtr> ps) {
        const NodePtr& X = ps[0];
        const NodePtr& G = ps[1];
        const NodePtr& Bb = ps[2];
        for (std::size_t i = 0; i < n; ++i) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            const double gx = o.grad[k] * G->data[j];
            sum_g += gx;
            sum_gx += gx * xhat[k];
            accumulate(G, j, o.grad[k] * xhat[k]);
            accumulate(Bb, j, o.grad[k]);
          }
          if (!X->requires_grad) continue;
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            const double gx = o.grad[k] * G->data[j];
            X->grad[k] += inv_std[i] * (gx - inv_d * sum_g - xhat[k] * inv_d * sum_gx);
          }
        }
      });
}

Value l2_normalize_rows(const Value& x, double eps_norm) {
  if (x.rank() != 2) {
    throw DimensionError(
        fmt::format("l2_normalize_rows: expected a matrix, got {}", shape_string(x.shape())));
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> norms(n), out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x.data()[i * d + j] * x.data()[i * d + j];
    norms[i] = std::sqrt(s);
    if (!(norms[i] > eps_norm)) {
      throw DegenerateVectorError(
          i, fmt::format("row {} has norm {} (<= {}); cosine similarity undefined", i, norms[i], eps_norm));
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.data()[i * d + j] / norms[i];
  }
  return make_op("l2_normalize_rows", x.shape(), std::move(out), {x},
                 [n, d, norms = std::move(norms)](const Node& o, std::span<const NodePtr> ps) {
                   for (std::size_t i = 0; i < n; ++i) {
                     double dot = 0.0;
                     for (std::size_t j = 0; j < d; ++j) dot += o.grad[i * d + j] * o.data[i * d + j];
                     for (std::size_t j = 0; j < d; ++j) {
                       const std::size_t k = i * d + j;
                       ps[0]->grad[k] += (o.grad[k] - o.data[k] * dot) / norms[i];
                     }
                   }
                 });
}

}  // namespace relaff
