#include "hintnart/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hintnart/errors.hpp"
#include "hintnart/kernels.hpp"

namespace hintnart::ad {

namespace {

using kernels::active;

std::shared_ptr<Node> make_node(NdArray value, std::vector<Var> parents,
                                std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& p : parents) {
    if (p.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const Var& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

NdArray& grad_of(const std::shared_ptr<Node>& n) { return n->grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                         " vs " + b.value().shape_str());
  }
}

// c tiles over leading axes of a: trailing shape must match exactly.
void require_tileable(const NdArray& a, const NdArray& c, const char* op) {
  if (c.rank() > a.rank()) throw DimensionError(std::string(op) + ": operand rank too high");
  const std::size_t off = a.rank() - c.rank();
  for (std::size_t i = 0; i < c.rank(); ++i) {
    if (a.shape[off + i] != c.shape[i]) {
      throw DimensionError(std::string(op) + ": trailing shape mismatch");
    }
  }
}

// C[k,n] += A[m,k]^T * G[m,n]
void mm_tn_acc(const double* a, const double* g, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto& kb = active();
  for (std::size_t p = 0; p < m; ++p) {
    const double* grow = g + p * n;
    for (std::size_t i = 0; i < k; ++i) {
      kb.axpy(a[p * k + i], grow, c + i * n, n);
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt_acc(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto& kb = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += kb.dot(arow, b + j * k, k);
    }
  }
}

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

}  // namespace

Var leaf(NdArray value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(n);
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  NdArray out(a.value().shape);
  active().add(a.value().data.data(), b.value().data.data(), out.data.data(), out.numel());
  return Var(make_node(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.numel();
    if (self.parents[0]->requires_grad) {
      active().axpy(1.0, self.grad.data.data(), grad_of(self.parents[0]).data.data(), n);
    }
    if (self.parents[1]->requires_grad) {
      active().axpy(1.0, self.grad.data.data(), grad_of(self.parents[1]).data.data(), n);
    }
  }));
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  NdArray out(a.value().shape);
  active().sub(a.value().data.data(), b.value().data.data(), out.data.data(), out.numel());
  return Var(make_node(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.numel();
    if (self.parents[0]->requires_grad) {
      active().axpy(1.0, self.grad.data.data(), grad_of(self.parents[0]).data.data(), n);
    }
    if (self.parents[1]->requires_grad) {
      active().axpy(-1.0, self.grad.data.data(), grad_of(self.parents[1]).data.data(), n);
    }
  }));
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  NdArray out(a.value().shape);
  active().mul(a.value().data.data(), b.value().data.data(), out.data.data(), out.numel());
  return Var(make_node(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.numel();
    const NdArray& av = self.parents[0]->value;
    const NdArray& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      NdArray& ga = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < n; ++i) ga.data[i] += self.grad.data[i] * bv.data[i];
    }
    if (self.parents[1]->requires_grad) {
      NdArray& gb = grad_of(self.parents[1]);
      for (std::size_t i = 0; i < n; ++i) gb.data[i] += self.grad.data[i] * av.data[i];
    }
  }));
}

Var scale(const Var& a, double c) {
  NdArray out(a.value().shape);
  active().scale(a.value().data.data(), c, out.data.data(), out.numel());
  return Var(make_node(std::move(out), {a}, [c](Node& self) {
    if (self.parents[0]->requires_grad) {
      active().axpy(c, self.grad.data.data(), grad_of(self.parents[0]).data.data(),
                    self.grad.numel());
    }
  }));
}

Var add_scalar(const Var& a, double c) {
  NdArray out = a.value();
  for (double& x : out.data) x += c;
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      active().axpy(1.0, self.grad.data.data(), grad_of(self.parents[0]).data.data(),
                    self.grad.numel());
    }
  }));
}

Var sub_from(double c, const Var& a) {
  NdArray out(a.value().shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = c - a.value().data[i];
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      active().axpy(-1.0, self.grad.data.data(), grad_of(self.parents[0]).data.data(),
                    self.grad.numel());
    }
  }));
}

Var exp(const Var& a) {
  NdArray out(a.value().shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::exp(a.value().data[i]);
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      NdArray& g = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        g.data[i] += self.grad.data[i] * self.value.data[i];
      }
    }
  }));
}

Var log(const Var& a) {
  NdArray out(a.value().shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::log(a.value().data[i]);
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      NdArray& g = grad_of(self.parents[0]);
      const NdArray& x = self.parents[0]->value;
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += self.grad.data[i] / x.data[i];
    }
  }));
}

Var relu(const Var& a) {
  NdArray out(a.value().shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::max(0.0, a.value().data[i]);
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      NdArray& g = grad_of(self.parents[0]);
      const NdArray& x = self.parents[0]->value;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (x.data[i] > 0.0) g.data[i] += self.grad.data[i];
      }
    }
  }));
}

Var clamp_min(const Var& a, double c) {
  NdArray out(a.value().shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::max(c, a.value().data[i]);
  return Var(make_node(std::move(out), {a}, [c](Node& self) {
    if (self.parents[0]->requires_grad) {
      NdArray& g = grad_of(self.parents[0]);
      const NdArray& x = self.parents[0]->value;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (x.data[i] > c) g.data[i] += self.grad.data[i];
      }
    }
  }));
}

Var clamp_max(const Var& a, double c) {
  NdArray out(a.value().shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::min(c, a.value().data[i]);
  return Var(make_node(std::move(out), {a}, [c](Node& self) {
    if (self.parents[0]->requires_grad) {
      NdArray& g = grad_of(self.parents[0]);
      const NdArray& x = self.parents[0]->value;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (x.data[i] < c) g.data[i] += self.grad.data[i];
      }
    }
  }));
}

Var sum_all(const Var& a) {
  NdArray out = NdArray::scalar(active().sum(a.value().data.data(), a.value().numel()));
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      NdArray& g = grad_of(self.parents[0]);
      const double gy = self.grad.data[0];
      for (double& x : g.data) x += gy;
    }
  }));
}

namespace {
// Decomposes shape around `axis` into outer/extent/inner block sizes.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};
AxisSplit split_axis(const NdArray& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) throw DimensionError(std::string(op) + ": axis out of range");
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= a.shape[i];
  s.extent = a.shape[axis];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) s.inner *= a.shape[i];
  return s;
}
}  // namespace

Var sum_axis(const Var& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.value(), axis, "sum_axis");
  std::vector<std::size_t> out_shape;
  for (std::size_t i = 0; i < a.value().rank(); ++i) {
    if (i != axis) out_shape.push_back(a.value().shape[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  NdArray out(out_shape);
  const double* src = a.value().data.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      active().axpy(1.0, src + (o * s.extent + e) * s.inner,
                    out.data.data() + o * s.inner, s.inner);
    }
  }
  return Var(make_node(std::move(out), {a}, [s](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    NdArray& g = grad_of(self.parents[0]);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        active().axpy(1.0, self.grad.data.data() + o * s.inner,
                      g.data.data() + (o * s.extent + e) * s.inner, s.inner);
      }
    }
  }));
}

Var mean_axis(const Var& a, std::size_t axis) {
  const double extent = static_cast<double>(a.value().shape.at(axis));
  return scale(sum_axis(a, axis), 1.0 / extent);
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  NdArray out = a.value().reshaped(std::move(shape));
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      active().axpy(1.0, self.grad.data.data(), grad_of(self.parents[0]).data.data(),
                    self.grad.numel());
    }
  }));
}

namespace {
NdArray permute_array(const NdArray& a, const std::vector<std::size_t>& perm) {
  const std::size_t r = a.rank();
  if (perm.size() != r) throw DimensionError("permute: rank mismatch");
  std::vector<std::size_t> out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.shape[perm[i]];
  NdArray out(out_shape);
  const auto in_st = strides_of(a.shape);
  const auto out_st = strides_of(out_shape);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < a.numel(); ++flat) {
    std::size_t rem = flat;
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) {
      idx[i] = rem / out_st[i];
      rem %= out_st[i];
      src += idx[i] * in_st[perm[i]];
    }
    out.data[flat] = a.data[src];
  }
  return out;
}
}  // namespace

Var permute(const Var& a, const std::vector<std::size_t>& perm) {
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  NdArray out = permute_array(a.value(), perm);
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return Var(make_node(std::move(out), {a}, [inv](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    NdArray back = permute_array(self.grad, inv);
    active().axpy(1.0, back.data.data(), grad_of(self.parents[0]).data.data(), back.numel());
  }));
}

Var transpose(const Var& a) {
  if (a.value().rank() != 2) throw DimensionError("transpose: rank-2 only");
  return permute(a, {1, 0});
}

Var concat(const Var& a, const Var& b, std::size_t axis) {
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  if (av.rank() != bv.rank()) throw DimensionError("concat: rank mismatch");
  for (std::size_t i = 0; i < av.rank(); ++i) {
    if (i != axis && av.shape[i] != bv.shape[i]) {
      throw DimensionError("concat: non-axis extents differ");
    }
  }
  const AxisSplit sa = split_axis(av, axis, "concat");
  const AxisSplit sb = split_axis(bv, axis, "concat");
  std::vector<std::size_t> out_shape = av.shape;
  out_shape[axis] = sa.extent + sb.extent;
  NdArray out(out_shape);
  const std::size_t ablk = sa.extent * sa.inner;
  const std::size_t bblk = sb.extent * sb.inner;
  for (std::size_t o = 0; o < sa.outer; ++o) {
    std::copy_n(av.data.data() + o * ablk, ablk, out.data.data() + o * (ablk + bblk));
    std::copy_n(bv.data.data() + o * bblk, bblk, out.data.data() + o * (ablk + bblk) + ablk);
  }
  return Var(make_node(std::move(out), {a, b}, [sa, ablk, bblk](Node& self) {
    for (std::size_t o = 0; o < sa.outer; ++o) {
      const double* gsrc = self.grad.data.data() + o * (ablk + bblk);
      if (self.parents[0]->requires_grad) {
        active().axpy(1.0, gsrc, grad_of(self.parents[0]).data.data() + o * ablk, ablk);
      }
      if (self.parents[1]->requires_grad) {
        active().axpy(1.0, gsrc + ablk, grad_of(self.parents[1]).data.data() + o * bblk, bblk);
      }
    }
  }));
}

Var matmul(const Var& a, const Var& b) {
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2) throw DimensionError("matmul: rank-2 operands required");
  if (av.shape[1] != bv.shape[0]) {
    throw DimensionError("matmul: inner dimensions disagree " + av.shape_str() + " vs " +
                         bv.shape_str());
  }
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  NdArray out({m, n});
  active().matmul(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  return Var(make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* g = self.grad.data.data();
    const NdArray& av2 = self.parents[0]->value;
    const NdArray& bv2 = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      mm_nt_acc(g, bv2.data.data(), grad_of(self.parents[0]).data.data(), m, n, k);
    }
    if (self.parents[1]->requires_grad) {
      mm_tn_acc(av2.data.data(), g, grad_of(self.parents[1]).data.data(), m, k, n);
    }
  }));
}

Var bmm(const Var& a, const Var& b) {
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3) throw DimensionError("bmm: rank-3 operands required");
  if (av.shape[0] != bv.shape[0] || av.shape[2] != bv.shape[1]) {
    throw DimensionError("bmm: shapes disagree " + av.shape_str() + " vs " + bv.shape_str());
  }
  const std::size_t batch = av.shape[0], m = av.shape[1], k = av.shape[2], n = bv.shape[2];
  NdArray out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    active().matmul(av.data.data() + i * m * k, bv.data.data() + i * k * n,
                    out.data.data() + i * m * n, m, k, n);
  }
  return Var(make_node(std::move(out), {a, b}, [batch, m, k, n](Node& self) {
    const NdArray& av2 = self.parents[0]->value;
    const NdArray& bv2 = self.parents[1]->value;
    for (std::size_t i = 0; i < batch; ++i) {
      const double* g = self.grad.data.data() + i * m * n;
      if (self.parents[0]->requires_grad) {
        mm_nt_acc(g, bv2.data.data() + i * k * n,
                  grad_of(self.parents[0]).data.data() + i * m * k, m, n, k);
      }
      if (self.parents[1]->requires_grad) {
        mm_tn_acc(av2.data.data() + i * m * k, g,
                  grad_of(self.parents[1]).data.data() + i * k * n, m, k, n);
      }
    }
  }));
}

Var add_rowwise(const Var& a, const Var& b) {
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  if (bv.rank() != 1 || bv.shape[0] != av.shape.back()) {
    throw DimensionError("add_rowwise: bias must match last extent");
  }
  const std::size_t n = bv.numel();
  NdArray out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i % n];
  return Var(make_node(std::move(out), {a, b}, [n](Node& self) {
    if (self.parents[0]->requires_grad) {
      active().axpy(1.0, self.grad.data.data(), grad_of(self.parents[0]).data.data(),
                    self.grad.numel());
    }
    if (self.parents[1]->requires_grad) {
      NdArray& gb = grad_of(self.parents[1]);
      const std::size_t rows = self.grad.numel() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        active().axpy(1.0, self.grad.data.data() + r * n, gb.data.data(), n);
      }
    }
  }));
}

Var softmax(const Var& a) {
  const NdArray& av = a.value();
  const std::size_t n = av.shape.back();
  const std::size_t rows = av.numel() / n;
  NdArray out(av.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data.data() + r * n;
    double* y = out.data.data() + r * n;
    const double m = active().maxval(x, n);
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i] - m);
    const double s = active().sum(y, n);
    active().scale(y, 1.0 / s, y, n);
  }
  return Var(make_node(std::move(out), {a}, [n, rows](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    NdArray& g = grad_of(self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data.data() + r * n;
      const double* gy = self.grad.data.data() + r * n;
      double* gx = g.data.data() + r * n;
      const double t = active().dot(gy, y, n);
      for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - t);
    }
  }));
}

Var log_softmax(const Var& a) {
  const NdArray& av = a.value();
  const std::size_t n = av.shape.back();
  const std::size_t rows = av.numel() / n;
  NdArray out(av.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data.data() + r * n;
    double* y = out.data.data() + r * n;
    const double m = active().maxval(x, n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
    const double lse = m + std::log(s);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  }
  return Var(make_node(std::move(out), {a}, [n, rows](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    NdArray& g = grad_of(self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* z = self.value.data.data() + r * n;
      const double* gy = self.grad.data.data() + r * n;
      double* gx = g.data.data() + r * n;
      const double t = active().sum(gy, n);
      for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] - std::exp(z[i]) * t;
    }
  }));
}

Var add_const(const Var& a, const NdArray& c) {
  require_tileable(a.value(), c, "add_const");
  NdArray out = a.value();
  const std::size_t cn = c.numel();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += c.data[i % cn];
  return Var(make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      active().axpy(1.0, self.grad.data.data(), grad_of(self.parents[0]).data.data(),
                    self.grad.numel());
    }
  }));
}

Var mul_const(const Var& a, const NdArray& c) {
  require_tileable(a.value(), c, "mul_const");
  NdArray out = a.value();
  const std::size_t cn = c.numel();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= c.data[i % cn];
  return Var(make_node(std::move(out), {a}, [c](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    NdArray& g = grad_of(self.parents[0]);
    const std::size_t cn = c.numel();
    for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += self.grad.data[i] * c.data[i % cn];
  }));
}

Var gather_rows(const Var& table, const std::vector<int>& ids) {
  const NdArray& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_rows: table must be rank 2");
  const std::size_t rows = tv.shape[0], d = tv.shape[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw InputError("gather_rows: id " + std::to_string(id) + " out of range");
    }
  }
  NdArray out({ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::copy_n(tv.data.data() + static_cast<std::size_t>(ids[t]) * d, d,
                out.data.data() + t * d);
  }
  return Var(make_node(std::move(out), {table}, [ids, d](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    NdArray& g = grad_of(self.parents[0]);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      active().axpy(1.0, self.grad.data.data() + t * d,
                    g.data.data() + static_cast<std::size_t>(ids[t]) * d, d);
    }
  }));
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const NdArray& xv = x.value();
  const std::size_t d = xv.shape.back();
  const std::size_t rows = xv.numel() / d;
  if (gain.value().numel() != d || bias.value().numel() != d) {
    throw DimensionError("layer_norm: gain/bias size must equal last extent");
  }
  NdArray out(xv.shape);
  NdArray xhat(xv.shape);
  std::vector<double> inv_std(rows);
  const double* gn = gain.value().data.data();
  const double* bs = bias.value().data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = xv.data.data() + r * d;
    double* xh = xhat.data.data() + r * d;
    double* yo = out.data.data() + r * d;
    const double mean = active().sum(xi, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = xi[i] - mean;
      xh[i] = c;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      xh[i] *= inv;
      yo[i] = gn[i] * xh[i] + bs[i];
    }
  }
  return Var(make_node(std::move(out), {x, gain, bias},
                       [d, rows, xhat, inv_std](Node& self) {
    const double* gn = self.parents[1]->value.data.data();
    std::vector<double> dxh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gy = self.grad.data.data() + r * d;
      const double* xh = xhat.data.data() + r * d;
      if (self.parents[1]->requires_grad) {
        NdArray& gg = grad_of(self.parents[1]);
        for (std::size_t i = 0; i < d; ++i) gg.data[i] += gy[i] * xh[i];
      }
      if (self.parents[2]->requires_grad) {
        NdArray& gb = grad_of(self.parents[2]);
        for (std::size_t i = 0; i < d; ++i) gb.data[i] += gy[i];
      }
      if (self.parents[0]->requires_grad) {
        NdArray& gx = grad_of(self.parents[0]);
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          dxh[i] = gy[i] * gn[i];
          sum_dxh += dxh[i];
          sum_dxh_xh += dxh[i] * xh[i];
        }
        const double inv = inv_std[r];
        const double m1 = sum_dxh / static_cast<double>(d);
        const double m2 = sum_dxh_xh / static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) {
          gx.data[r * d + i] += inv * (dxh[i] - m1 - xh[i] * m2);
        }
      }
    }
  }));
}

Var cosine_matrix(const Var& x) {
  const NdArray& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("cosine_matrix: rank-2 input required");
  const std::size_t t = xv.shape[0], d = xv.shape[1];
  std::vector<double> norms(t);
  for (std::size_t i = 0; i < t; ++i) {
    norms[i] = std::sqrt(active().sqsum(xv.data.data() + i * d, d));
  }
  NdArray out({t, t});
  for (std::size_t i = 0; i < t; ++i) {
    out.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < t; ++j) {
      double c = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        c = active().dot(xv.data.data() + i * d, xv.data.data() + j * d, d) /
            (norms[i] * norms[j]);
        c = std::clamp(c, -1.0, 1.0);
      }
      out.at(i, j) = c;
      out.at(j, i) = c;
    }
  }
  const NdArray cos_copy = out;
  return Var(make_node(std::move(out), {x}, [t, d, norms, cos_copy](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const NdArray& xv2 = self.parents[0]->value;
    NdArray& g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        if (i == j) continue;
        const double gy = self.grad.at(i, j);
        if (gy == 0.0 || norms[i] == 0.0 || norms[j] == 0.0) continue;
        const double c = cos_copy.at(i, j);
        // d cos(r_i, r_j) / d r_i = r_j/(|r_i||r_j|) - c * r_i/|r_i|^2,
        // and symmetrically for r_j
        active().axpy(gy / (norms[i] * norms[j]), xv2.data.data() + j * d,
                      g.data.data() + i * d, d);
        active().axpy(-gy * c / (norms[i] * norms[i]), xv2.data.data() + i * d,
                      g.data.data() + i * d, d);
        active().axpy(gy / (norms[i] * norms[j]), xv2.data.data() + i * d,
                      g.data.data() + j * d, d);
        active().axpy(-gy * c / (norms[j] * norms[j]), xv2.data.data() + j * d,
                      g.data.data() + j * d, d);
      }
    }
  }));
}

Var add_n(const std::vector<Var>& vs) {
  if (vs.empty()) throw ContractError("add_n: empty operand list");
  for (const Var& v : vs) require_same_shape(vs[0], v, "add_n");
  NdArray out = vs[0].value();
  for (std::size_t i = 1; i < vs.size(); ++i) {
    active().add(out.data.data(), vs[i].value().data.data(), out.data.data(), out.numel());
  }
  return Var(make_node(std::move(out), vs, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        active().axpy(1.0, self.grad.data.data(), grad_of(p).data.data(), self.grad.numel());
      }
    }
  }));
}

void backward(const Var& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined loss");
  if (loss.value().numel() != 1) throw ContractError("backward: loss must be scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; each node enters the order exactly once.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->grad.numel() != n->value.numel()) n->grad = NdArray(n->value.shape);
  }
  Node* root = loss.node().get();
  root->grad.data[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace hintnart::ad
