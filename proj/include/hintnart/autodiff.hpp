#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hintnart/ndarray.hpp"

namespace hintnart::ad {

// Eagerly evaluated reverse-mode graph. Values are computed at node
// construction; backward() replays the tape in reverse topological order,
// visiting each node exactly once. Nodes that do not require gradients drop
// their parent links, so pure-inference graphs never retain activations.
struct Node {
  NdArray value;
  NdArray grad;  // allocated by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const NdArray& value() const { return node_->value; }
  const NdArray& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var leaf(NdArray value, bool requires_grad);
inline Var constant(NdArray value) { return leaf(std::move(value), false); }

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var sub_from(double c, const Var& a);  // c - a

Var exp(const Var& a);
Var log(const Var& a);
Var relu(const Var& a);
Var clamp_min(const Var& a, double c);  // gradient detached where clamped
Var clamp_max(const Var& a, double c);

Var sum_all(const Var& a);                   // -> shape {1}
Var sum_axis(const Var& a, std::size_t axis);
Var mean_axis(const Var& a, std::size_t axis);

Var reshape(const Var& a, std::vector<std::size_t> shape);
Var permute(const Var& a, const std::vector<std::size_t>& perm);
Var transpose(const Var& a);  // rank 2
Var concat(const Var& a, const Var& b, std::size_t axis);

Var matmul(const Var& a, const Var& b);  // [m,k]x[k,n]
Var bmm(const Var& a, const Var& b);     // [B,m,k]x[B,k,n]

// a[..., n] + b[n], b tiled over leading axes of a.
Var add_rowwise(const Var& a, const Var& b);

Var softmax(const Var& a);      // last axis, max-subtracted
Var log_softmax(const Var& a);  // last axis

// Constant-operand variants; c may have lower rank than a, in which case it
// tiles over the leading axes (trailing shape must match).
Var add_const(const Var& a, const NdArray& c);
Var mul_const(const Var& a, const NdArray& c);

Var gather_rows(const Var& table, const std::vector<int>& ids);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-6);

// [T,d] -> [T,T] pairwise cosine similarities, unit diagonal. Zero-norm rows
// yield 0 off-diagonal and carry no gradient.
Var cosine_matrix(const Var& x);

Var add_n(const std::vector<Var>& vs);

// Accumulates d(loss)/d(node) into every reachable node that requires a
// gradient. loss must be scalar.
void backward(const Var& loss);

}  // namespace hintnart::ad
