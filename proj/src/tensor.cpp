#include "lcs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace lcs {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

[[noreturn]] void shape_error(OpKind kind, const std::vector<int>& a,
                              const std::vector<int>& b) {
  throw TensorError(std::string("shape mismatch in ") + op_name(kind) + ": " +
                    shape_str(a) + " vs " + shape_str(b));
}

std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void check_shape(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 2)
    throw TensorError("tensor rank must be 1 or 2, got rank " +
                      std::to_string(shape.size()));
  for (int d : shape)
    if (d <= 0) throw TensorError("tensor dims must be positive, got " + shape_str(shape));
}

using NodePtr = std::shared_ptr<Tensor::Node>;

NodePtr make_node(std::vector<int> shape, std::vector<double> data,
                  std::vector<NodePtr> parents) {
  auto node = std::make_shared<Tensor::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->parents = std::move(parents);
  for (const auto& p : node->parents)
    if (p->requires_grad) node->requires_grad = true;
  return node;
}

// Rows/cols treating rank-1 as a single row.
int view_rows(const std::vector<int>& s) { return s.size() == 2 ? s[0] : 1; }
int view_cols(const std::vector<int>& s) { return s.size() == 2 ? s[1] : s[0]; }

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kTanh: return "tanh";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
  }
  return "?";
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data.assign(numel(shape), 0.0);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(const std::vector<int>& shape, std::vector<double> data,
                    bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != data.size())
    throw TensorError("data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::rows() const { return view_rows(node_->shape); }
int Tensor::cols() const { return view_cols(node_->shape); }
std::size_t Tensor::size() const { return node_->data.size(); }
std::vector<double>& Tensor::data() { return node_->data; }
const std::vector<double>& Tensor::data() const { return node_->data; }
const std::vector<double>& Tensor::grad() const { return node_->grad; }
bool Tensor::requires_grad() const { return node_->requires_grad; }

double Tensor::item() const {
  if (node_->data.size() != 1)
    throw TensorError("item() requires a single-element tensor, got shape " +
                      shape_str(node_->shape));
  return node_->data[0];
}

void Tensor::zero_grad() { node_->grad.clear(); }

namespace {

std::vector<double>& ensure_grad(const NodePtr& n) {
  if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
  return n->grad;
}

Tensor elementwise_binary(OpKind kind, const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const bool same = as == bs;
  // Rank-1 b of length cols(a) broadcasts over the rows of a.
  const bool bcast = !same && bs.size() == 1 && view_cols(as) == bs[0];
  if (!same && !bcast) shape_error(kind, as, bs);

  const int rows = view_rows(as);
  const int cols = view_cols(as);
  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<double> out(ad.size());
  auto bval = [&](int r, int c) { return same ? bd[r * cols + c] : bd[c]; };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double x = ad[r * cols + c];
      const double y = bval(r, c);
      double v = 0.0;
      switch (kind) {
        case OpKind::kAdd: v = x + y; break;
        case OpKind::kSub: v = x - y; break;
        case OpKind::kMul: v = x * y; break;
        case OpKind::kDiv:
          if (y == 0.0) throw TensorError("div: zero divisor");
          v = x / y;
          break;
        default: break;
      }
      out[r * cols + c] = v;
    }

  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  auto node = make_node(as, std::move(out), {an, bn});
  auto* raw = node.get();
  node->backward_fn = [kind, raw, an, bn, same, rows, cols]() {
    const auto& g = raw->grad;
    auto& ga = ensure_grad(an);
    auto& gb = ensure_grad(bn);
    const auto& ad = an->data;
    const auto& bd = bn->data;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        const std::size_t j = same ? i : static_cast<std::size_t>(c);
        const double go = g[i];
        switch (kind) {
          case OpKind::kAdd:
            ga[i] += go;
            gb[j] += go;
            break;
          case OpKind::kSub:
            ga[i] += go;
            gb[j] -= go;
            break;
          case OpKind::kMul:
            ga[i] += go * bd[j];
            gb[j] += go * ad[i];
            break;
          case OpKind::kDiv:
            ga[i] += go / bd[j];
            gb[j] -= go * ad[i] / (bd[j] * bd[j]);
            break;
          default: break;
        }
      }
  };
  return Tensor(std::move(node));
}

Tensor elementwise_unary(OpKind kind, const Tensor& a) {
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double x = ad[i];
    switch (kind) {
      case OpKind::kTanh: out[i] = std::tanh(x); break;
      case OpKind::kLeakyRelu: out[i] = x >= 0.0 ? x : kLeakyReluSlope * x; break;
      case OpKind::kExp: out[i] = std::exp(x); break;
      case OpKind::kLog:
        if (x <= 0.0)
          throw TensorError("log: non-positive operand " + std::to_string(x));
        out[i] = std::log(x);
        break;
      case OpKind::kSquare: out[i] = x * x; break;
      default: break;
    }
  }
  auto an = a.node_ptr();
  auto node = make_node(a.shape(), std::move(out), {an});
  auto* raw = node.get();
  node->backward_fn = [kind, raw, an]() {
    const auto& g = raw->grad;
    const auto& y = raw->data;
    const auto& x = an->data;
    auto& ga = ensure_grad(an);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case OpKind::kTanh: d = 1.0 - y[i] * y[i]; break;
        case OpKind::kLeakyRelu: d = x[i] >= 0.0 ? 1.0 : kLeakyReluSlope; break;
        case OpKind::kExp: d = y[i]; break;
        case OpKind::kLog: d = 1.0 / x[i]; break;
        case OpKind::kSquare: d = 2.0 * x[i]; break;
        default: break;
      }
      ga[i] += g[i] * d;
    }
  };
  return Tensor(std::move(node));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    shape_error(OpKind::kMatmul, a.shape(), b.shape());
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      for (int j = 0; j < n; ++j) out[i * n + j] += av * bd[p * n + j];
    }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  auto node = make_node({m, n}, std::move(out), {an, bn});
  auto* raw = node.get();
  node->backward_fn = [raw, an, bn, m, k, n]() {
    const auto& g = raw->grad;
    const auto& ad = an->data;
    const auto& bd = bn->data;
    auto& ga = ensure_grad(an);
    auto& gb = ensure_grad(bn);
    // dA = G * B^T ; dB = A^T * G
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double go = g[i * n + j];
        if (go == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          ga[i * k + p] += go * bd[p * n + j];
          gb[p * n + j] += ad[i * k + p] * go;
        }
      }
  };
  return Tensor(std::move(node));
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(OpKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(OpKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(OpKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise_binary(OpKind::kDiv, a, b); }
Tensor tanh(const Tensor& a) { return elementwise_unary(OpKind::kTanh, a); }
Tensor leaky_relu(const Tensor& a) { return elementwise_unary(OpKind::kLeakyRelu, a); }
Tensor exp(const Tensor& a) { return elementwise_unary(OpKind::kExp, a); }
Tensor log(const Tensor& a) { return elementwise_unary(OpKind::kLog, a); }
Tensor square(const Tensor& a) { return elementwise_unary(OpKind::kSquare, a); }

namespace {

Tensor reduce(OpKind kind, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double denom = kind == OpKind::kMean ? static_cast<double>(a.size()) : 1.0;
  auto an = a.node_ptr();
  auto node = make_node({1}, {s / denom}, {an});
  auto* raw = node.get();
  node->backward_fn = [raw, an, denom]() {
    const double go = raw->grad[0] / denom;
    auto& ga = ensure_grad(an);
    for (double& g : ga) g += go;
  };
  return Tensor(std::move(node));
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce(OpKind::kSum, a); }
Tensor mean(const Tensor& a) { return reduce(OpKind::kMean, a); }

Tensor softmax_rows(const Tensor& a) {
  const int rows = view_rows(a.shape());
  const int cols = view_cols(a.shape());
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (int r = 0; r < rows; ++r) {
    double mx = ad[r * cols];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, ad[r * cols + c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      out[r * cols + c] = std::exp(ad[r * cols + c] - mx);
      z += out[r * cols + c];
    }
    for (int c = 0; c < cols; ++c) out[r * cols + c] /= z;
  }
  auto an = a.node_ptr();
  auto node = make_node(a.shape(), std::move(out), {an});
  auto* raw = node.get();
  node->backward_fn = [raw, an, rows, cols]() {
    const auto& g = raw->grad;
    const auto& y = raw->data;
    auto& ga = ensure_grad(an);
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (int c = 0; c < cols; ++c)
        ga[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  };
  return Tensor(std::move(node));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (view_rows(a.shape()) != view_rows(b.shape()))
    shape_error(OpKind::kConcatCols, a.shape(), b.shape());
  const int rows = view_rows(a.shape());
  const int ca = view_cols(a.shape());
  const int cb = view_cols(b.shape());
  const int cols = ca + cb;
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < ca; ++c) out[r * cols + c] = a.data()[r * ca + c];
    for (int c = 0; c < cb; ++c) out[r * cols + ca + c] = b.data()[r * cb + c];
  }
  std::vector<int> shape =
      a.shape().size() == 2 || b.shape().size() == 2
          ? std::vector<int>{rows, cols}
          : std::vector<int>{cols};
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  auto node = make_node(std::move(shape), std::move(out), {an, bn});
  auto* raw = node.get();
  node->backward_fn = [raw, an, bn, rows, ca, cb]() {
    const int cols = ca + cb;
    const auto& g = raw->grad;
    auto& ga = ensure_grad(an);
    auto& gb = ensure_grad(bn);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < ca; ++c) ga[r * ca + c] += g[r * cols + c];
      for (int c = 0; c < cb; ++c) gb[r * cb + c] += g[r * cols + ca + c];
    }
  };
  return Tensor(std::move(node));
}

Tensor slice_cols(const Tensor& a, int col_begin, int col_end) {
  const int rows = view_rows(a.shape());
  const int cols = view_cols(a.shape());
  if (col_begin < 0 || col_end > cols || col_begin >= col_end)
    throw TensorError("slice_cols: range [" + std::to_string(col_begin) + "," +
                      std::to_string(col_end) + ") invalid for " +
                      std::to_string(cols) + " columns");
  const int w = col_end - col_begin;
  std::vector<double> out(static_cast<std::size_t>(rows) * w);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < w; ++c) out[r * w + c] = a.data()[r * cols + col_begin + c];
  std::vector<int> shape = a.shape().size() == 2 ? std::vector<int>{rows, w}
                                                 : std::vector<int>{w};
  auto an = a.node_ptr();
  auto node = make_node(std::move(shape), std::move(out), {an});
  auto* raw = node.get();
  node->backward_fn = [raw, an, rows, cols, col_begin, w]() {
    const auto& g = raw->grad;
    auto& ga = ensure_grad(an);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c) ga[r * cols + col_begin + c] += g[r * w + c];
  };
  return Tensor(std::move(node));
}

Tensor scale(const Tensor& a, double c) {
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * c;
  auto an = a.node_ptr();
  auto node = make_node(a.shape(), std::move(out), {an});
  auto* raw = node.get();
  node->backward_fn = [raw, an, c]() {
    auto& ga = ensure_grad(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += raw->grad[i] * c;
  };
  return Tensor(std::move(node));
}

Tensor add_const(const Tensor& a, double c) {
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + c;
  auto an = a.node_ptr();
  auto node = make_node(a.shape(), std::move(out), {an});
  auto* raw = node.get();
  node->backward_fn = [raw, an]() {
    auto& ga = ensure_grad(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += raw->grad[i];
  };
  return Tensor(std::move(node));
}

Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, OpAttrs attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      throw TensorError(std::string(op_name(kind)) + ": expected " +
                        std::to_string(n) + " inputs, got " +
                        std::to_string(inputs.size()));
  };
  switch (kind) {
    case OpKind::kMatmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::kAdd: need(2); return add(inputs[0], inputs[1]);
    case OpKind::kSub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::kMul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::kDiv: need(2); return div(inputs[0], inputs[1]);
    case OpKind::kTanh: need(1); return tanh(inputs[0]);
    case OpKind::kLeakyRelu: need(1); return leaky_relu(inputs[0]);
    case OpKind::kExp: need(1); return exp(inputs[0]);
    case OpKind::kLog: need(1); return log(inputs[0]);
    case OpKind::kSquare: need(1); return square(inputs[0]);
    case OpKind::kSum: need(1); return sum(inputs[0]);
    case OpKind::kMean: need(1); return mean(inputs[0]);
    case OpKind::kSoftmaxRows: need(1); return softmax_rows(inputs[0]);
    case OpKind::kConcatCols: need(2); return concat_cols(inputs[0], inputs[1]);
    case OpKind::kSliceCols:
      need(1);
      return slice_cols(inputs[0], attrs.col_begin, attrs.col_end);
  }
  throw TensorError("unknown op kind");
}

void backward(const Tensor& output) {
  if (!output.defined() || output.size() != 1)
    throw TensorError("backward: output must be a defined scalar tensor");

  // Deterministic topological order via iterative post-order DFS,
  // visiting parents left to right.
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> seen;
  struct Frame {
    Tensor::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({output.node(), 0});
  seen.insert(output.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Tensor::Node* p = f.node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (Tensor::Node* n : order) n->grad.assign(n->data.size(), 0.0);
  output.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

}  // namespace lcs
