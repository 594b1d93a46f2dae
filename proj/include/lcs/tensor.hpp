#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcs {

// Structured failure from the numeric engine (shape mismatch, domain error,
// non-finite abort). The message always names the offending operation.
class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

enum class OpKind {
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kTanh,
  kLeakyRelu,
  kExp,
  kLog,
  kSquare,
  kSum,
  kMean,
  kSoftmaxRows,
  kConcatCols,
  kSliceCols,
};

const char* op_name(OpKind kind);

// Dense rank-1/rank-2 tensor of doubles participating in a define-by-run
// computation graph. Copies share the underlying node (value semantics for
// the handle, one storage per graph node).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor from(const std::vector<int>& shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rows() const;
  int cols() const;
  std::size_t size() const;
  std::vector<double>& data();
  const std::vector<double>& data() const;
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  double item() const;  // single-element tensors only

  void zero_grad();

  struct Node;
  Node* node() const { return node_.get(); }
  std::shared_ptr<Node> node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

struct Tensor::Node {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void()> backward_fn;
};

// Attributes for ops that need more than their inputs (column ranges).
struct OpAttrs {
  int col_begin = 0;
  int col_end = 0;
};

// Generic dispatcher over the supported op set.
Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, OpAttrs attrs = {});

// Named forms (the dispatcher routes to these).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a);  // slope 0.2
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor softmax_rows(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, int col_begin, int col_end);

// Constant-scalar conveniences (no extra graph inputs).
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);

// Reverse-mode sweep from a scalar output. Gradients of every reachable node
// are reset and re-accumulated in a fixed topological order.
void backward(const Tensor& output);

constexpr double kLeakyReluSlope = 0.2;

}  // namespace lcs
