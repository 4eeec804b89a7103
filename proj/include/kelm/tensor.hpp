#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace kelm {

// Thrown for every contract violation: bad shapes, malformed files, unknown ids.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated at creation for leaves, on demand otherwise
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backprop;  // accumulates this->grad into inputs' grads

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

}  // namespace detail

// Dense row-major tensor of doubles (rank 1 or 2), participating in a
// recorded computation that backward() sweeps once in reverse.
// Copies are shallow; a Tensor is a handle to its node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor of(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  std::int64_t size() const { return node_->size(); }

  double item() const;
  double at(int i) const { return node_->value[static_cast<size_t>(i)]; }
  double at(int r, int c) const { return node_->value[static_cast<size_t>(r) * dim(1) + c]; }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// --- primitives ---------------------------------------------------------
// All primitives record the application for the reverse sweep. Shape
// violations throw Error naming the primitive and the offending shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor concat(const std::vector<Tensor>& parts, int axis);
// `excluded`, when nonempty, flags positions (flat indexing) that receive
// exactly zero probability; the rest of each row renormalizes. A fully
// excluded row comes back all-zero.
Tensor softmax(const Tensor& x, int axis, const std::vector<std::uint8_t>& excluded = {});
Tensor leaky_relu(const Tensor& x, double slope = 0.01);
Tensor elu(const Tensor& x, double alpha = 1.0);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor transpose(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor sum(const Tensor& x);           // all elements -> scalar
Tensor sum(const Tensor& x, int axis); // rank-2 only
Tensor gather(const Tensor& x, const std::vector<int>& rows);
Tensor mean_rows(const Tensor& x);
Tensor log(const Tensor& x);
// Row-wise layer normalization with trainable gain/shift (used by the
// transformer encoder; biased variance).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Reverse sweep from a scalar loss. Gradients accumulate on leaf tensors
// created with requires_grad; the caller zeroes them between steps.
void backward(const Tensor& loss);

}  // namespace kelm
