#include "kelm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace kelm {

namespace {

using detail::Node;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void rank_error(const char* op, const Shape& a) {
  throw Error(std::string(op) + ": unsupported shape " + shape_str(a));
}

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->leaf = true;
  if (requires_grad) n->grad.assign(n->value.size(), 0.0);
  return n;
}

std::shared_ptr<Node> make_op(const char* op, Shape shape, std::vector<double> values,
                              std::vector<std::shared_ptr<Node>> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->leaf = false;
  n->op = op;
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in->requires_grad) n->requires_grad = true;
  return n;
}

void ensure_grad(Node* n) {
  if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
}

// C[m x p] (+)= A[m x k] * B[k x p]
void mm(const double* a, const double* b, double* c, int m, int k, int p) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * p;
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(l) * p;
      for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x p] (+)= A[k x m]^T * B[k x p]
void mm_at(const double* a, const double* b, double* c, int k, int m, int p) {
  for (int l = 0; l < k; ++l) {
    const double* arow = a + static_cast<size_t>(l) * m;
    const double* brow = b + static_cast<size_t>(l) * p;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(i) * p;
      for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] (+)= A[m x p] * B[k x p]^T
void mm_bt(const double* a, const double* b, double* c, int m, int p, int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * p;
    double* crow = c + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<size_t>(j) * p;
      double acc = 0.0;
      for (int l = 0; l < p; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

Tensor unary_map(const char* op, const Tensor& x, double (*f)(double, double),
                 double (*df)(double, double, double), double param) {
  auto xn = x.node();
  std::vector<double> out(xn->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(xn->value[i], param);
  auto n = make_op(op, xn->shape, std::move(out), {xn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* in = xn.get();
    n->backprop = [self, in, df, param]() {
      if (!in->requires_grad) return;
      ensure_grad(in);
      for (size_t i = 0; i < self->value.size(); ++i)
        in->grad[i] += self->grad[i] * df(in->value[i], self->value[i], param);
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) rank_error("zeros", shape);
    n *= d;
  }
  return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0),
                          requires_grad));
}

Tensor Tensor::of(Shape shape, std::vector<double> values, bool requires_grad) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  if (n != static_cast<std::int64_t>(values.size()))
    throw Error("Tensor::of: " + std::to_string(values.size()) + " values for shape " +
                shape_str(shape));
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v) { return of({1}, {v}); }

double Tensor::item() const {
  if (size() != 1) throw Error("item: tensor of size " + std::to_string(size()) + " is not scalar");
  return node_->value[0];
}

std::vector<double>& Tensor::grad() {
  ensure_grad(node_.get());
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  ensure_grad(node_.get());
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->value.size(), 0.0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto an = a.node(), bn = b.node();
  if (an->shape.size() != 2 || bn->shape.size() != 2 || an->shape[1] != bn->shape[0])
    shape_error("matmul", an->shape, bn->shape);
  const int m = an->shape[0], k = an->shape[1], p = bn->shape[1];
  std::vector<double> out(static_cast<size_t>(m) * p, 0.0);
  mm(an->value.data(), bn->value.data(), out.data(), m, k, p);
  auto n = make_op("matmul", {m, p}, std::move(out), {an, bn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* A = an.get();
    Node* B = bn.get();
    n->backprop = [self, A, B, m, k, p]() {
      if (A->requires_grad) {
        ensure_grad(A);
        mm_bt(self->grad.data(), B->value.data(), A->grad.data(), m, p, k);
      }
      if (B->requires_grad) {
        ensure_grad(B);
        mm_at(A->value.data(), self->grad.data(), B->grad.data(), m, k, p);
      }
    };
  }
  return Tensor(n);
}

namespace {

Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, int mode) {
  auto an = a.node(), bn = b.node();
  if (an->shape != bn->shape) shape_error(op, an->shape, bn->shape);
  std::vector<double> out(an->value.size());
  for (size_t i = 0; i < out.size(); ++i) {
    switch (mode) {
      case 0: out[i] = an->value[i] + bn->value[i]; break;
      case 1: out[i] = an->value[i] - bn->value[i]; break;
      default: out[i] = an->value[i] * bn->value[i]; break;
    }
  }
  auto n = make_op(op, an->shape, std::move(out), {an, bn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* A = an.get();
    Node* B = bn.get();
    n->backprop = [self, A, B, mode]() {
      const size_t sz = self->value.size();
      if (A->requires_grad) {
        ensure_grad(A);
        for (size_t i = 0; i < sz; ++i)
          A->grad[i] += mode == 2 ? self->grad[i] * B->value[i] : self->grad[i];
      }
      if (B->requires_grad) {
        ensure_grad(B);
        for (size_t i = 0; i < sz; ++i) {
          if (mode == 0) B->grad[i] += self->grad[i];
          else if (mode == 1) B->grad[i] -= self->grad[i];
          else B->grad[i] += self->grad[i] * A->value[i];
        }
      }
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise("add", a, b, 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise("sub", a, b, 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise("mul", a, b, 2); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw Error("concat: no inputs");
  std::vector<std::shared_ptr<Node>> ins;
  ins.reserve(parts.size());
  for (const auto& p : parts) ins.push_back(p.node());

  const bool all_rank1 =
      std::all_of(ins.begin(), ins.end(), [](const auto& n) { return n->shape.size() == 1; });

  Shape out_shape;
  if (axis == 0 && all_rank1) {
    int total = 0;
    for (const auto& n : ins) total += n->shape[0];
    out_shape = {total};
  } else if (axis == 0) {
    int rows = 0;
    const int cols = ins[0]->shape.size() == 2 ? ins[0]->shape[1] : -1;
    for (const auto& n : ins) {
      if (n->shape.size() != 2 || n->shape[1] != cols) shape_error("concat", ins[0]->shape, n->shape);
      rows += n->shape[0];
    }
    out_shape = {rows, cols};
  } else if (axis == 1) {
    const int rows = ins[0]->shape.size() == 2 ? ins[0]->shape[0] : -1;
    int cols = 0;
    for (const auto& n : ins) {
      if (n->shape.size() != 2 || n->shape[0] != rows) shape_error("concat", ins[0]->shape, n->shape);
      cols += n->shape[1];
    }
    out_shape = {rows, cols};
  } else {
    throw Error("concat: axis must be 0 or 1");
  }

  std::int64_t total = 1;
  for (int d : out_shape) total *= d;
  std::vector<double> out(static_cast<size_t>(total));
  if (axis == 0) {
    size_t off = 0;
    for (const auto& n : ins) {
      std::copy(n->value.begin(), n->value.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
      off += n->value.size();
    }
  } else {
    const int rows = out_shape[0], cols = out_shape[1];
    int coff = 0;
    for (const auto& n : ins) {
      const int c = n->shape[1];
      for (int r = 0; r < rows; ++r)
        std::copy(n->value.begin() + static_cast<std::ptrdiff_t>(r) * c,
                  n->value.begin() + static_cast<std::ptrdiff_t>(r + 1) * c,
                  out.begin() + static_cast<std::ptrdiff_t>(r) * cols + coff);
      coff += c;
    }
  }

  auto n = make_op("concat", out_shape, std::move(out), ins);
  if (n->requires_grad) {
    Node* self = n.get();
    std::vector<Node*> raw;
    raw.reserve(ins.size());
    for (const auto& i : ins) raw.push_back(i.get());
    n->backprop = [self, raw, axis]() {
      if (axis == 0) {
        size_t off = 0;
        for (Node* in : raw) {
          if (in->requires_grad) {
            ensure_grad(in);
            for (size_t i = 0; i < in->value.size(); ++i) in->grad[i] += self->grad[off + i];
          }
          off += in->value.size();
        }
      } else {
        const int rows = self->shape[0], cols = self->shape[1];
        int coff = 0;
        for (Node* in : raw) {
          const int c = in->shape[1];
          if (in->requires_grad) {
            ensure_grad(in);
            for (int r = 0; r < rows; ++r)
              for (int j = 0; j < c; ++j)
                in->grad[static_cast<size_t>(r) * c + j] +=
                    self->grad[static_cast<size_t>(r) * cols + coff + j];
          }
          coff += c;
        }
      }
    };
  }
  return Tensor(n);
}

Tensor softmax(const Tensor& x, int axis, const std::vector<std::uint8_t>& excluded) {
  auto xn = x.node();
  const auto& sh = xn->shape;
  int rows, cols;
  if (sh.size() == 1) {
    if (axis != 0) throw Error("softmax: axis must be 0 for rank-1 input");
    rows = 1;
    cols = sh[0];
  } else if (sh.size() == 2) {
    if (axis != 1) throw Error("softmax: axis must be 1 for rank-2 input (row softmax)");
    rows = sh[0];
    cols = sh[1];
  } else {
    rank_error("softmax", sh);
  }
  if (!excluded.empty() && excluded.size() != xn->value.size())
    throw Error("softmax: mask size " + std::to_string(excluded.size()) + " != input size " +
                std::to_string(xn->value.size()));

  std::vector<double> out(xn->value.size(), 0.0);
  for (int r = 0; r < rows; ++r) {
    const size_t base = static_cast<size_t>(r) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cols; ++j)
      if ((excluded.empty() || !excluded[base + j]) && xn->value[base + j] > mx)
        mx = xn->value[base + j];
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully excluded row
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      if (!excluded.empty() && excluded[base + j]) continue;
      out[base + j] = std::exp(xn->value[base + j] - mx);
      z += out[base + j];
    }
    for (int j = 0; j < cols; ++j) out[base + j] /= z;
  }

  auto n = make_op("softmax", sh, std::move(out), {xn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* in = xn.get();
    n->backprop = [self, in, rows, cols]() {
      if (!in->requires_grad) return;
      ensure_grad(in);
      for (int r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += self->grad[base + j] * self->value[base + j];
        for (int j = 0; j < cols; ++j)
          in->grad[base + j] += self->value[base + j] * (self->grad[base + j] - dot);
      }
    };
  }
  return Tensor(n);
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_map(
      "leaky_relu", x, [](double v, double s) { return v > 0.0 ? v : s * v; },
      [](double v, double, double s) { return v > 0.0 ? 1.0 : s; }, slope);
}

Tensor elu(const Tensor& x, double alpha) {
  return unary_map(
      "elu", x, [](double v, double a) { return v > 0.0 ? v : a * (std::exp(v) - 1.0); },
      [](double v, double y, double a) { return v > 0.0 ? 1.0 : y + a; }, alpha);
}

Tensor relu(const Tensor& x) {
  return unary_map(
      "relu", x, [](double v, double) { return v > 0.0 ? v : 0.0; },
      [](double v, double, double) { return v > 0.0 ? 1.0 : 0.0; }, 0.0);
}

Tensor sigmoid(const Tensor& x) {
  return unary_map(
      "sigmoid", x, [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y, double) { return y * (1.0 - y); }, 0.0);
}

Tensor log(const Tensor& x) {
  return unary_map(
      "log", x, [](double v, double) { return std::log(v); },
      [](double v, double, double) { return 1.0 / v; }, 0.0);
}

Tensor transpose(const Tensor& x) {
  auto xn = x.node();
  if (xn->shape.size() != 2) rank_error("transpose", xn->shape);
  const int r = xn->shape[0], c = xn->shape[1];
  std::vector<double> out(xn->value.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(j) * r + i] = xn->value[static_cast<size_t>(i) * c + j];
  auto n = make_op("transpose", {c, r}, std::move(out), {xn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* in = xn.get();
    n->backprop = [self, in, r, c]() {
      if (!in->requires_grad) return;
      ensure_grad(in);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          in->grad[static_cast<size_t>(i) * c + j] += self->grad[static_cast<size_t>(j) * r + i];
    };
  }
  return Tensor(n);
}

Tensor scale(const Tensor& x, double c) {
  return unary_map(
      "scale", x, [](double v, double k) { return v * k; },
      [](double, double, double k) { return k; }, c);
}

Tensor sum(const Tensor& x) {
  auto xn = x.node();
  double acc = 0.0;
  for (double v : xn->value) acc += v;
  auto n = make_op("sum", {1}, {acc}, {xn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* in = xn.get();
    n->backprop = [self, in]() {
      if (!in->requires_grad) return;
      ensure_grad(in);
      for (size_t i = 0; i < in->value.size(); ++i) in->grad[i] += self->grad[0];
    };
  }
  return Tensor(n);
}

Tensor sum(const Tensor& x, int axis) {
  auto xn = x.node();
  if (xn->shape.size() != 2 || (axis != 0 && axis != 1)) rank_error("sum", xn->shape);
  const int r = xn->shape[0], c = xn->shape[1];
  std::vector<double> out(static_cast<size_t>(axis == 0 ? c : r), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(axis == 0 ? j : i)] += xn->value[static_cast<size_t>(i) * c + j];
  auto n = make_op("sum", {axis == 0 ? c : r}, std::move(out), {xn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* in = xn.get();
    n->backprop = [self, in, r, c, axis]() {
      if (!in->requires_grad) return;
      ensure_grad(in);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          in->grad[static_cast<size_t>(i) * c + j] += self->grad[static_cast<size_t>(axis == 0 ? j : i)];
    };
  }
  return Tensor(n);
}

Tensor gather(const Tensor& x, const std::vector<int>& rows) {
  auto xn = x.node();
  if (rows.empty()) throw Error("gather: empty index list");
  if (xn->shape.size() == 1) {
    const int len = xn->shape[0];
    std::vector<double> out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= len)
        throw Error("gather: index " + std::to_string(rows[i]) + " out of range for length " +
                    std::to_string(len));
      out[i] = xn->value[static_cast<size_t>(rows[i])];
    }
    auto n = make_op("gather", {static_cast<int>(rows.size())}, std::move(out), {xn});
    if (n->requires_grad) {
      Node* self = n.get();
      Node* in = xn.get();
      auto idx = rows;
      n->backprop = [self, in, idx]() {
        if (!in->requires_grad) return;
        ensure_grad(in);
        for (size_t i = 0; i < idx.size(); ++i)
          in->grad[static_cast<size_t>(idx[i])] += self->grad[i];
      };
    }
    return Tensor(n);
  }
  if (xn->shape.size() != 2) rank_error("gather", xn->shape);
  const int r = xn->shape[0], c = xn->shape[1];
  std::vector<double> out(rows.size() * static_cast<size_t>(c));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= r)
      throw Error("gather: row " + std::to_string(rows[i]) + " out of range for " +
                  std::to_string(r) + " rows");
    std::copy(xn->value.begin() + static_cast<std::ptrdiff_t>(rows[i]) * c,
              xn->value.begin() + static_cast<std::ptrdiff_t>(rows[i] + 1) * c,
              out.begin() + static_cast<std::ptrdiff_t>(i) * c);
  }
  auto n = make_op("gather", {static_cast<int>(rows.size()), c}, std::move(out), {xn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* in = xn.get();
    auto idx = rows;
    n->backprop = [self, in, idx, c]() {
      if (!in->requires_grad) return;
      ensure_grad(in);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < c; ++j)
          in->grad[static_cast<size_t>(idx[i]) * c + j] += self->grad[i * c + j];
    };
  }
  return Tensor(n);
}

Tensor mean_rows(const Tensor& x) {
  auto xn = x.node();
  if (xn->shape.size() != 2) rank_error("mean_rows", xn->shape);
  const int r = xn->shape[0], c = xn->shape[1];
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(j)] += xn->value[static_cast<size_t>(i) * c + j];
  for (int j = 0; j < c; ++j) out[static_cast<size_t>(j)] /= r;
  auto n = make_op("mean_rows", {c}, std::move(out), {xn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* in = xn.get();
    n->backprop = [self, in, r, c]() {
      if (!in->requires_grad) return;
      ensure_grad(in);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          in->grad[static_cast<size_t>(i) * c + j] += self->grad[static_cast<size_t>(j)] / r;
    };
  }
  return Tensor(n);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  if (xn->shape.size() != 2) rank_error("layer_norm", xn->shape);
  const int r = xn->shape[0], c = xn->shape[1];
  if (gn->shape != Shape{c} || bn->shape != Shape{c})
    shape_error("layer_norm", xn->shape, gn->shape);

  std::vector<double> out(xn->value.size());
  // cached normalized values and inverse stddevs for the backward pass
  auto xhat = std::make_shared<std::vector<double>>(xn->value.size());
  auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const size_t base = static_cast<size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += xn->value[base + j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = xn->value[base + j] - mean;
      var += d * d;
    }
    var /= c;
    const double iv = 1.0 / std::sqrt(var + eps);
    (*inv)[static_cast<size_t>(i)] = iv;
    for (int j = 0; j < c; ++j) {
      const double h = (xn->value[base + j] - mean) * iv;
      (*xhat)[base + j] = h;
      out[base + j] = gn->value[static_cast<size_t>(j)] * h + bn->value[static_cast<size_t>(j)];
    }
  }

  auto n = make_op("layer_norm", xn->shape, std::move(out), {xn, gn, bn});
  if (n->requires_grad) {
    Node* self = n.get();
    Node* X = xn.get();
    Node* G = gn.get();
    Node* B = bn.get();
    n->backprop = [self, X, G, B, xhat, inv, r, c]() {
      for (int i = 0; i < r; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        if (G->requires_grad) {
          ensure_grad(G);
          for (int j = 0; j < c; ++j)
            G->grad[static_cast<size_t>(j)] += self->grad[base + j] * (*xhat)[base + j];
        }
        if (B->requires_grad) {
          ensure_grad(B);
          for (int j = 0; j < c; ++j) B->grad[static_cast<size_t>(j)] += self->grad[base + j];
        }
        if (X->requires_grad) {
          ensure_grad(X);
          double sum_g = 0.0, sum_gh = 0.0;
          for (int j = 0; j < c; ++j) {
            const double gg = self->grad[base + j] * G->value[static_cast<size_t>(j)];
            sum_g += gg;
            sum_gh += gg * (*xhat)[base + j];
          }
          const double iv = (*inv)[static_cast<size_t>(i)];
          for (int j = 0; j < c; ++j) {
            const double gg = self->grad[base + j] * G->value[static_cast<size_t>(j)];
            X->grad[base + j] += iv * (gg - (sum_g + (*xhat)[base + j] * sum_gh) / c);
          }
        }
      }
    };
  }
  return Tensor(n);
}

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root) throw Error("backward: undefined tensor");
  if (root->size() != 1)
    throw Error("backward: loss has " + std::to_string(root->size()) + " elements, expected scalar");

  // topological order over the requires_grad subgraph
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  if (root->requires_grad) stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* in = node->inputs[next++].get();
      if (in->requires_grad && seen.insert(in).second) stack.emplace_back(in, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // fresh transient grads; leaf grads persist and accumulate
  for (Node* n : order) {
    if (n->leaf) ensure_grad(n);
    else n->grad.assign(n->value.size(), 0.0);
  }
  if (!root->requires_grad) return;  // constant loss: nothing to propagate
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace kelm
