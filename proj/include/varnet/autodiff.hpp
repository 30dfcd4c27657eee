#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <utility>
#include <vector>

#include "varnet/errors.hpp"
#include "varnet/fft.hpp"
#include "varnet/mask.hpp"
#include "varnet/tensor.hpp"

// Reverse-mode automatic differentiation on dense double tensors. The graph
// is rebuilt per forward pass; leaves (network parameters) persist across
// passes and accumulate gradients until explicitly zeroed.
//
// Complex-valued quantities travel as real tensors of shape [N, 2, H, W]
// with the re/im pair on axis 1; gradients are then plain real calculus with
// no Wirtinger bookkeeping.

namespace varnet::ad {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    v_.assign(static_cast<std::size_t>(numel_of(shape_)), 0.0);
  }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.v_[0] = v;
    return t;
  }

  static Tensor full(std::vector<long> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.v_.begin(), t.v_.end(), v);
    return t;
  }

  static long numel_of(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
      if (d < 1) throw InvalidInput("Tensor: dimensions must be >= 1");
      n *= d;
    }
    return n;
  }

  const std::vector<long>& shape() const { return shape_; }
  long ndim() const { return static_cast<long>(shape_.size()); }
  long numel() const { return static_cast<long>(v_.size()); }
  long dim(long i) const { return shape_[i < 0 ? shape_.size() + i : i]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double& operator[](long i) { return v_[i]; }
  const double& operator[](long i) const { return v_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::vector<long> strides() const {
    std::vector<long> s(shape_.size(), 1);
    for (long i = static_cast<long>(shape_.size()) - 2; i >= 0; --i)
      s[i] = s[i + 1] * shape_[i + 1];
    return s;
  }

 private:
  std::vector<long> shape_;
  std::vector<double> v_;
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<Var> parents;
  std::function<void()> backward_fn;
  std::string name;

  Tensor& accum_grad() {
    if (!grad_ready) {
      grad = Tensor(val.shape());
      grad_ready = true;
    }
    return grad;
  }

  void zero_grad() {
    grad_ready = false;
    grad = Tensor();
  }
};

inline Var leaf(Tensor v, bool requires_grad = false, std::string name = {}) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

inline Var constant(Tensor v) { return leaf(std::move(v), false); }

namespace detail {

inline Var make_op(Tensor val, std::vector<Var> parents) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->val.same_shape(b->val))
    throw InvalidInput(std::string(op) + ": operand shapes differ");
}

}  // namespace detail

// Accumulate d(root)/d(leaf) into every reachable grad-requiring node.
// root must be scalar (numel == 1).
inline void backward(const Var& root) {
  if (root->val.numel() != 1) throw InvalidInput("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Iterative postorder DFS over grad-requiring subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->accum_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad_ready) n->backward_fn();
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i] + b->val[i];
  Var n = detail::make_op(std::move(out), {a, b});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get(), *pb = b.get();
    n->backward_fn = [self, pa, pb] {
      if (pa->requires_grad) {
        auto& g = pa->accum_grad();
        for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        auto& g = pb->accum_grad();
        for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i];
      }
    };
  }
  return n;
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i] - b->val[i];
  Var n = detail::make_op(std::move(out), {a, b});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get(), *pb = b.get();
    n->backward_fn = [self, pa, pb] {
      if (pa->requires_grad) {
        auto& g = pa->accum_grad();
        for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        auto& g = pb->accum_grad();
        for (long i = 0; i < g.numel(); ++i) g[i] -= self->grad[i];
      }
    };
  }
  return n;
}

inline Var mul(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i] * b->val[i];
  Var n = detail::make_op(std::move(out), {a, b});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get(), *pb = b.get();
    n->backward_fn = [self, pa, pb] {
      if (pa->requires_grad) {
        auto& g = pa->accum_grad();
        for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i] * pb->val[i];
      }
      if (pb->requires_grad) {
        auto& g = pb->accum_grad();
        for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i] * pa->val[i];
      }
    };
  }
  return n;
}

inline Var div(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "div");
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i] / b->val[i];
  Var n = detail::make_op(std::move(out), {a, b});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get(), *pb = b.get();
    n->backward_fn = [self, pa, pb] {
      if (pa->requires_grad) {
        auto& g = pa->accum_grad();
        for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i] / pb->val[i];
      }
      if (pb->requires_grad) {
        auto& g = pb->accum_grad();
        for (long i = 0; i < g.numel(); ++i) {
          const double bv = pb->val[i];
          g[i] -= self->grad[i] * pa->val[i] / (bv * bv);
        }
      }
    };
  }
  return n;
}

inline Var add_scalar(const Var& a, double s) {
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i] + s;
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa] {
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i];
    };
  }
  return n;
}

inline Var mul_scalar(const Var& a, double s) {
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i] * s;
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa, s] {
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i] * s;
    };
  }
  return n;
}

inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

inline Var sqrt_v(const Var& a) {
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = std::sqrt(a->val[i]);
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa] {
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i] * 0.5 / self->val[i];
    };
  }
  return n;
}

inline Var square(const Var& a) {
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i] * a->val[i];
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa] {
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i] * 2.0 * pa->val[i];
    };
  }
  return n;
}

inline Var leaky_relu(const Var& a, double slope) {
  Tensor out(a->val.shape());
  for (long i = 0; i < out.numel(); ++i) {
    const double v = a->val[i];
    out[i] = v >= 0 ? v : slope * v;
  }
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa, slope] {
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i)
        g[i] += self->grad[i] * (pa->val[i] >= 0 ? 1.0 : slope);
    };
  }
  return n;
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(const Var& a, std::vector<long> shape) {
  if (Tensor::numel_of(shape) != a->val.numel())
    throw InvalidInput("reshape: element count mismatch");
  Tensor out(std::move(shape));
  for (long i = 0; i < out.numel(); ++i) out[i] = a->val[i];
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa] {
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i) g[i] += self->grad[i];
    };
  }
  return n;
}

namespace detail {

// Map each linear index of `out_shape` onto the linear index of a tensor of
// `in_shape` broadcast (numpy right-aligned) to that shape.
struct BroadcastMap {
  std::vector<long> out_shape;
  std::vector<long> in_stride;  // per out-axis, 0 where broadcast

  BroadcastMap(const std::vector<long>& in_shape, const std::vector<long>& out) : out_shape(out) {
    const long pad = static_cast<long>(out.size()) - static_cast<long>(in_shape.size());
    if (pad < 0) throw InvalidInput("broadcast: target rank below input rank");
    std::vector<long> full_in(out.size(), 1);
    for (std::size_t i = 0; i < in_shape.size(); ++i) full_in[pad + i] = in_shape[i];
    std::vector<long> strides(out.size(), 1);
    for (long i = static_cast<long>(out.size()) - 2; i >= 0; --i)
      strides[i] = strides[i + 1] * full_in[i + 1];
    in_stride.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (full_in[i] == out[i])
        in_stride[i] = strides[i];
      else if (full_in[i] == 1)
        in_stride[i] = 0;
      else
        throw InvalidInput("broadcast: incompatible shapes");
    }
  }

  template <typename F>
  void for_each(F&& f) const {
    const long rank = static_cast<long>(out_shape.size());
    std::vector<long> idx(rank, 0);
    long total = 1;
    for (long d : out_shape) total *= d;
    long in_pos = 0;
    for (long o = 0; o < total; ++o) {
      f(o, in_pos);
      for (long ax = rank - 1; ax >= 0; --ax) {
        ++idx[ax];
        in_pos += in_stride[ax];
        if (idx[ax] < out_shape[ax]) break;
        idx[ax] = 0;
        in_pos -= in_stride[ax] * out_shape[ax];
      }
    }
  }
};

}  // namespace detail

inline Var broadcast_to(const Var& a, std::vector<long> shape) {
  detail::BroadcastMap map(a->val.shape(), shape);
  Tensor out(std::move(shape));
  map.for_each([&](long o, long i) { out[o] = a->val[i]; });
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa, map] {
      auto& g = pa->accum_grad();
      map.for_each([&](long o, long i) { g[i] += self->grad[o]; });
    };
  }
  return n;
}

// Sum over the given axes (negative axes allowed). keepdims retains size-1
// axes so the result broadcasts back.
inline Var reduce_sum(const Var& a, std::vector<long> axes, bool keepdims) {
  const long rank = a->val.ndim();
  std::vector<bool> reduce(rank, false);
  for (long ax : axes) {
    if (ax < 0) ax += rank;
    if (ax < 0 || ax >= rank) throw InvalidInput("reduce_sum: axis out of range");
    reduce[ax] = true;
  }
  std::vector<long> kept_shape;
  std::vector<long> out_shape_keep(rank);
  for (long i = 0; i < rank; ++i) {
    out_shape_keep[i] = reduce[i] ? 1 : a->val.shape()[i];
    if (!reduce[i]) kept_shape.push_back(a->val.shape()[i]);
  }
  if (kept_shape.empty()) kept_shape.push_back(1);

  detail::BroadcastMap map(out_shape_keep, a->val.shape());
  Tensor out(keepdims ? out_shape_keep : kept_shape);
  map.for_each([&](long in_pos, long out_pos) { out[out_pos] += a->val[in_pos]; });

  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa, map] {
      auto& g = pa->accum_grad();
      map.for_each([&](long in_pos, long out_pos) { g[in_pos] += self->grad[out_pos]; });
    };
  }
  return n;
}

inline Var reduce_mean(const Var& a, std::vector<long> axes, bool keepdims) {
  long k = 1;
  const long rank = a->val.ndim();
  for (long ax : axes) k *= a->val.shape()[ax < 0 ? ax + rank : ax];
  return mul_scalar(reduce_sum(a, std::move(axes), keepdims), 1.0 / double(k));
}

inline Var sum_all(const Var& a) {
  Tensor out({1});
  double s = 0;
  for (long i = 0; i < a->val.numel(); ++i) s += a->val[i];
  out[0] = s;
  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa] {
      auto& g = pa->accum_grad();
      const double gv = self->grad[0];
      for (long i = 0; i < g.numel(); ++i) g[i] += gv;
    };
  }
  return n;
}

inline Var mean_all(const Var& a) {
  return mul_scalar(sum_all(a), 1.0 / double(a->val.numel()));
}

inline Var concat(const std::vector<Var>& parts, long axis) {
  if (parts.empty()) throw InvalidInput("concat: no inputs");
  const long rank = parts[0]->val.ndim();
  if (axis < 0) axis += rank;
  std::vector<long> shape = parts[0]->val.shape();
  long total = 0;
  for (const auto& p : parts) {
    if (p->val.ndim() != rank) throw InvalidInput("concat: rank mismatch");
    for (long i = 0; i < rank; ++i)
      if (i != axis && p->val.shape()[i] != shape[i])
        throw InvalidInput("concat: shape mismatch off the concat axis");
    total += p->val.shape()[axis];
  }
  shape[axis] = total;

  // outer x axis x inner layout
  long outer = 1, inner = 1;
  for (long i = 0; i < axis; ++i) outer *= shape[i];
  for (long i = axis + 1; i < rank; ++i) inner *= shape[i];

  Tensor out(shape);
  long off = 0;
  for (const auto& p : parts) {
    const long len = p->val.shape()[axis];
    for (long o = 0; o < outer; ++o)
      for (long j = 0; j < len; ++j)
        for (long i = 0; i < inner; ++i)
          out[(o * total + off + j) * inner + i] = p->val[(o * len + j) * inner + i];
    off += len;
  }

  Var n = detail::make_op(std::move(out), parts);
  if (n->requires_grad) {
    Node* self = n.get();
    std::vector<Node*> ps;
    std::vector<long> lens;
    for (const auto& p : parts) {
      ps.push_back(p.get());
      lens.push_back(p->val.shape()[axis]);
    }
    n->backward_fn = [self, ps, lens, outer, inner, total] {
      long off2 = 0;
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const long len = lens[k];
        if (ps[k]->requires_grad) {
          auto& g = ps[k]->accum_grad();
          for (long o = 0; o < outer; ++o)
            for (long j = 0; j < len; ++j)
              for (long i = 0; i < inner; ++i)
                g[(o * len + j) * inner + i] += self->grad[(o * total + off2 + j) * inner + i];
        }
        off2 += len;
      }
    };
  }
  return n;
}

inline Var slice(const Var& a, long axis, long from, long to) {
  const long rank = a->val.ndim();
  if (axis < 0) axis += rank;
  const long len = a->val.shape()[axis];
  if (from < 0 || to > len || from >= to) throw InvalidInput("slice: bad range");
  std::vector<long> shape = a->val.shape();
  shape[axis] = to - from;

  long outer = 1, inner = 1;
  for (long i = 0; i < axis; ++i) outer *= shape[i];
  for (long i = axis + 1; i < rank; ++i) inner *= shape[i];
  const long out_len = to - from;

  Tensor out(shape);
  for (long o = 0; o < outer; ++o)
    for (long j = 0; j < out_len; ++j)
      for (long i = 0; i < inner; ++i)
        out[(o * out_len + j) * inner + i] = a->val[(o * len + from + j) * inner + i];

  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa, outer, inner, out_len, len, from] {
      auto& g = pa->accum_grad();
      for (long o = 0; o < outer; ++o)
        for (long j = 0; j < out_len; ++j)
          for (long i = 0; i < inner; ++i)
            g[(o * len + from + j) * inner + i] += self->grad[(o * out_len + j) * inner + i];
    };
  }
  return n;
}

// Zero-pad the last two axes.
inline Var pad2d(const Var& a, long top, long bottom, long left, long right) {
  const long rank = a->val.ndim();
  if (rank < 2) throw InvalidInput("pad2d: needs rank >= 2");
  std::vector<long> shape = a->val.shape();
  const long h = shape[rank - 2], w = shape[rank - 1];
  const long nh = h + top + bottom, nw = w + left + right;
  shape[rank - 2] = nh;
  shape[rank - 1] = nw;
  long batch = 1;
  for (long i = 0; i < rank - 2; ++i) batch *= a->val.shape()[i];

  Tensor out(shape);
  for (long b = 0; b < batch; ++b)
    for (long r = 0; r < h; ++r)
      for (long c = 0; c < w; ++c)
        out[(b * nh + r + top) * nw + left + c] = a->val[(b * h + r) * w + c];

  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa, batch, h, w, nh, nw, top, left] {
      auto& g = pa->accum_grad();
      for (long b = 0; b < batch; ++b)
        for (long r = 0; r < h; ++r)
          for (long c = 0; c < w; ++c)
            g[(b * h + r) * w + c] += self->grad[(b * nh + r + top) * nw + left + c];
    };
  }
  return n;
}

// Crop the last two axes to [top, top+h) x [left, left+w).
inline Var crop2d(const Var& a, long top, long left, long h, long w) {
  const long rank = a->val.ndim();
  if (rank < 2) throw InvalidInput("crop2d: needs rank >= 2");
  std::vector<long> shape = a->val.shape();
  const long ih = shape[rank - 2], iw = shape[rank - 1];
  if (top + h > ih || left + w > iw) throw InvalidInput("crop2d: window exceeds input");
  shape[rank - 2] = h;
  shape[rank - 1] = w;
  long batch = 1;
  for (long i = 0; i < rank - 2; ++i) batch *= a->val.shape()[i];

  Tensor out(shape);
  for (long b = 0; b < batch; ++b)
    for (long r = 0; r < h; ++r)
      for (long c = 0; c < w; ++c)
        out[(b * h + r) * w + c] = a->val[(b * ih + top + r) * iw + left + c];

  Var n = detail::make_op(std::move(out), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa, batch, h, w, ih, iw, top, left] {
      auto& g = pa->accum_grad();
      for (long b = 0; b < batch; ++b)
        for (long r = 0; r < h; ++r)
          for (long c = 0; c < w; ++c)
            g[(b * ih + top + r) * iw + left + c] += self->grad[(b * h + r) * w + c];
    };
  }
  return n;
}

// ---------------------------------------------------------------------------
// Neural-network primitives

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// im2col for stride-1 convolution with symmetric zero padding.
// x: [Cin, H, W] -> cols: [Cin*kh*kw, Ho*Wo]
inline RowMat im2col(const Tensor& x, long kh, long kw, long pad) {
  const long cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const long ho = h + 2 * pad - kh + 1, wo = w + 2 * pad - kw + 1;
  RowMat cols(cin * kh * kw, ho * wo);
  for (long ci = 0; ci < cin; ++ci)
    for (long a = 0; a < kh; ++a)
      for (long b = 0; b < kw; ++b) {
        const long row = (ci * kh + a) * kw + b;
        for (long r = 0; r < ho; ++r) {
          const long sr = r + a - pad;
          for (long c = 0; c < wo; ++c) {
            const long sc = c + b - pad;
            cols(row, r * wo + c) = (sr >= 0 && sr < h && sc >= 0 && sc < w)
                                        ? x[(ci * h + sr) * w + sc]
                                        : 0.0;
          }
        }
      }
  return cols;
}

// Scatter-add of column-matrix gradients back onto the padded input grid.
inline void col2im_accum(const RowMat& cols, Tensor& gx, long kh, long kw, long pad) {
  const long cin = gx.shape()[0], h = gx.shape()[1], w = gx.shape()[2];
  const long ho = h + 2 * pad - kh + 1, wo = w + 2 * pad - kw + 1;
  for (long ci = 0; ci < cin; ++ci)
    for (long a = 0; a < kh; ++a)
      for (long b = 0; b < kw; ++b) {
        const long row = (ci * kh + a) * kw + b;
        for (long r = 0; r < ho; ++r) {
          const long sr = r + a - pad;
          if (sr < 0 || sr >= h) continue;
          for (long c = 0; c < wo; ++c) {
            const long sc = c + b - pad;
            if (sc < 0 || sc >= w) continue;
            gx[(ci * h + sr) * w + sc] += cols(row, r * wo + c);
          }
        }
      }
}

}  // namespace detail

// Stride-1 2D convolution. x: [Cin, H, W], w: [Cout, Cin, kh, kw],
// optional bias: [Cout]. Symmetric zero padding.
inline Var conv2d(const Var& x, const Var& w, const Var& bias, long pad) {
  if (x->val.ndim() != 3 || w->val.ndim() != 4)
    throw InvalidInput("conv2d: expected x [Cin,H,W], w [Cout,Cin,kh,kw]");
  const long cin = x->val.shape()[0], h = x->val.shape()[1], wd = x->val.shape()[2];
  const long cout = w->val.shape()[0], kh = w->val.shape()[2], kw = w->val.shape()[3];
  if (w->val.shape()[1] != cin) throw InvalidInput("conv2d: channel mismatch");
  const long ho = h + 2 * pad - kh + 1, wo = wd + 2 * pad - kw + 1;
  if (ho < 1 || wo < 1) throw InvalidInput("conv2d: kernel exceeds padded input");

  detail::RowMat cols = detail::im2col(x->val, kh, kw, pad);
  Eigen::Map<const detail::RowMat> wm(w->val.data(), cout, cin * kh * kw);

  Tensor out({cout, ho, wo});
  Eigen::Map<detail::RowMat> om(out.data(), cout, ho * wo);
  om.noalias() = wm * cols;
  if (bias) {
    for (long co = 0; co < cout; ++co) {
      const double b = bias->val[co];
      for (long i = 0; i < ho * wo; ++i) out[co * ho * wo + i] += b;
    }
  }

  std::vector<Var> parents = bias ? std::vector<Var>{x, w, bias} : std::vector<Var>{x, w};
  Var n = detail::make_op(std::move(out), std::move(parents));
  if (n->requires_grad) {
    Node *self = n.get(), *px = x.get(), *pw = w.get();
    Node* pb = bias ? bias.get() : nullptr;
    n->backward_fn = [self, px, pw, pb, cin, cout, kh, kw, pad, ho, wo] {
      Eigen::Map<const detail::RowMat> go(self->grad.data(), cout, ho * wo);
      if (pw->requires_grad) {
        detail::RowMat cols = detail::im2col(px->val, kh, kw, pad);
        Eigen::Map<detail::RowMat> gw(pw->accum_grad().data(), cout, cin * kh * kw);
        gw.noalias() += go * cols.transpose();
      }
      if (px->requires_grad) {
        Eigen::Map<const detail::RowMat> wm(pw->val.data(), cout, cin * kh * kw);
        detail::RowMat gcols = wm.transpose() * go;
        detail::col2im_accum(gcols, px->accum_grad(), kh, kw, pad);
      }
      if (pb && pb->requires_grad) {
        auto& gb = pb->accum_grad();
        for (long co = 0; co < cout; ++co) gb[co] += go.row(co).sum();
      }
    };
  }
  return n;
}

inline Var conv2d(const Var& x, const Var& w, long pad) { return conv2d(x, w, nullptr, pad); }

// 2x2 stride-2 transposed convolution (non-overlapping upsampling).
// x: [Cin, H, W], w: [Cin, Cout, 2, 2] -> [Cout, 2H, 2W]
inline Var conv_transpose2x2(const Var& x, const Var& w) {
  if (x->val.ndim() != 3 || w->val.ndim() != 4)
    throw InvalidInput("conv_transpose2x2: expected x [Cin,H,W], w [Cin,Cout,2,2]");
  const long cin = x->val.shape()[0], h = x->val.shape()[1], wd = x->val.shape()[2];
  const long cout = w->val.shape()[1];
  if (w->val.shape()[0] != cin || w->val.shape()[2] != 2 || w->val.shape()[3] != 2)
    throw InvalidInput("conv_transpose2x2: weight shape mismatch");

  Tensor out({cout, 2 * h, 2 * wd});
  for (long co = 0; co < cout; ++co)
    for (long ci = 0; ci < cin; ++ci) {
      const double w00 = w->val[((ci * cout + co) * 2 + 0) * 2 + 0];
      const double w01 = w->val[((ci * cout + co) * 2 + 0) * 2 + 1];
      const double w10 = w->val[((ci * cout + co) * 2 + 1) * 2 + 0];
      const double w11 = w->val[((ci * cout + co) * 2 + 1) * 2 + 1];
      for (long r = 0; r < h; ++r)
        for (long c = 0; c < wd; ++c) {
          const double v = x->val[(ci * h + r) * wd + c];
          double* o = &out[(co * 2 * h + 2 * r) * 2 * wd + 2 * c];
          o[0] += v * w00;
          o[1] += v * w01;
          o[2 * wd] += v * w10;
          o[2 * wd + 1] += v * w11;
        }
    }

  Var n = detail::make_op(std::move(out), {x, w});
  if (n->requires_grad) {
    Node *self = n.get(), *px = x.get(), *pw = w.get();
    n->backward_fn = [self, px, pw, cin, cout, h, wd] {
      for (long co = 0; co < cout; ++co)
        for (long ci = 0; ci < cin; ++ci) {
          const long wbase = ((ci * cout + co) * 2) * 2;
          double gw00 = 0, gw01 = 0, gw10 = 0, gw11 = 0;
          for (long r = 0; r < h; ++r)
            for (long c = 0; c < wd; ++c) {
              const double* g = &self->grad[(co * 2 * h + 2 * r) * 2 * wd + 2 * c];
              const double g00 = g[0], g01 = g[1], g10 = g[2 * wd], g11 = g[2 * wd + 1];
              if (px->requires_grad) {
                px->accum_grad()[(ci * h + r) * wd + c] +=
                    g00 * pw->val[wbase + 0] + g01 * pw->val[wbase + 1] +
                    g10 * pw->val[wbase + 2] + g11 * pw->val[wbase + 3];
              }
              const double v = px->val[(ci * h + r) * wd + c];
              gw00 += v * g00;
              gw01 += v * g01;
              gw10 += v * g10;
              gw11 += v * g11;
            }
          if (pw->requires_grad) {
            auto& gw = pw->accum_grad();
            gw[wbase + 0] += gw00;
            gw[wbase + 1] += gw01;
            gw[wbase + 2] += gw10;
            gw[wbase + 3] += gw11;
          }
        }
    };
  }
  return n;
}

// 2x2 average pooling; spatial dims must be even.
inline Var avg_pool2(const Var& x) {
  const long rank = x->val.ndim();
  if (rank < 2) throw InvalidInput("avg_pool2: needs rank >= 2");
  std::vector<long> shape = x->val.shape();
  const long h = shape[rank - 2], w = shape[rank - 1];
  if (h % 2 || w % 2) throw InvalidInput("avg_pool2: spatial dims must be even");
  shape[rank - 2] = h / 2;
  shape[rank - 1] = w / 2;
  long batch = 1;
  for (long i = 0; i < rank - 2; ++i) batch *= x->val.shape()[i];

  Tensor out(shape);
  for (long b = 0; b < batch; ++b)
    for (long r = 0; r < h / 2; ++r)
      for (long c = 0; c < w / 2; ++c) {
        const double* p = &x->val[(b * h + 2 * r) * w + 2 * c];
        out[(b * (h / 2) + r) * (w / 2) + c] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }

  Var n = detail::make_op(std::move(out), {x});
  if (n->requires_grad) {
    Node *self = n.get(), *px = x.get();
    n->backward_fn = [self, px, batch, h, w] {
      auto& g = px->accum_grad();
      for (long b = 0; b < batch; ++b)
        for (long r = 0; r < h / 2; ++r)
          for (long c = 0; c < w / 2; ++c) {
            const double gv = 0.25 * self->grad[(b * (h / 2) + r) * (w / 2) + c];
            double* p = &g[(b * h + 2 * r) * w + 2 * c];
            p[0] += gv;
            p[1] += gv;
            p[w] += gv;
            p[w + 1] += gv;
          }
    };
  }
  return n;
}

// ---------------------------------------------------------------------------
// Complex-tensor primitives, layout [N, 2, H, W]

namespace detail {

inline void check_complex4(const Var& a, const char* op) {
  if (a->val.ndim() != 4 || a->val.shape()[1] != 2)
    throw InvalidInput(std::string(op) + ": expected [N, 2, H, W] tensor");
}

inline CxImage plane_to_cx(const Tensor& t, long coil) {
  const long h = t.shape()[2], w = t.shape()[3];
  CxImage img(h, w);
  const double* re = t.data() + ((coil * 2 + 0) * h) * w;
  const double* im = t.data() + ((coil * 2 + 1) * h) * w;
  for (long i = 0; i < h * w; ++i) img[i] = cx(re[i], im[i]);
  return img;
}

inline void cx_to_plane(const CxImage& img, Tensor& t, long coil) {
  const long h = t.shape()[2], w = t.shape()[3];
  double* re = t.data() + ((coil * 2 + 0) * h) * w;
  double* im = t.data() + ((coil * 2 + 1) * h) * w;
  for (long i = 0; i < h * w; ++i) {
    re[i] = img[i].real();
    im[i] = img[i].imag();
  }
}

inline Tensor fft_tensor(const Tensor& x, bool inverse) {
  Tensor out(x.shape());
  const long n = x.shape()[0];
  for (long i = 0; i < n; ++i) {
    CxImage plane = plane_to_cx(x, i);
    CxImage res = inverse ? varnet::ifft2c(plane) : varnet::fft2c(plane);
    cx_to_plane(res, out, i);
  }
  return out;
}

}  // namespace detail

// Centered orthonormal FFT on [N, 2, H, W]. The transform is unitary and
// complex-linear, so the gradient flows through the inverse transform.
inline Var fft2c_v(const Var& a) {
  detail::check_complex4(a, "fft2c_v");
  Var n = detail::make_op(detail::fft_tensor(a->val, false), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa] {
      Tensor gin = detail::fft_tensor(self->grad, true);
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i) g[i] += gin[i];
    };
  }
  return n;
}

inline Var ifft2c_v(const Var& a) {
  detail::check_complex4(a, "ifft2c_v");
  Var n = detail::make_op(detail::fft_tensor(a->val, true), {a});
  if (n->requires_grad) {
    Node *self = n.get(), *pa = a.get();
    n->backward_fn = [self, pa] {
      Tensor gin = detail::fft_tensor(self->grad, false);
      auto& g = pa->accum_grad();
      for (long i = 0; i < g.numel(); ++i) g[i] += gin[i];
    };
  }
  return n;
}

// Elementwise complex product of [N, 2, H, W] tensors.
inline Var complex_mul(const Var& a, const Var& b) {
  detail::check_complex4(a, "complex_mul");
  detail::check_same_shape(a, b, "complex_mul");
  const long n = a->val.shape()[0], h = a->val.shape()[2], w = a->val.shape()[3];
  const long hw = h * w;
  Tensor out(a->val.shape());
  for (long i = 0; i < n; ++i) {
    const double* ar = a->val.data() + (i * 2 + 0) * hw;
    const double* ai = a->val.data() + (i * 2 + 1) * hw;
    const double* br = b->val.data() + (i * 2 + 0) * hw;
    const double* bi = b->val.data() + (i * 2 + 1) * hw;
    double* yr = out.data() + (i * 2 + 0) * hw;
    double* yi = out.data() + (i * 2 + 1) * hw;
    for (long k = 0; k < hw; ++k) {
      yr[k] = ar[k] * br[k] - ai[k] * bi[k];
      yi[k] = ar[k] * bi[k] + ai[k] * br[k];
    }
  }
  Var v = detail::make_op(std::move(out), {a, b});
  if (v->requires_grad) {
    Node *self = v.get(), *pa = a.get(), *pb = b.get();
    v->backward_fn = [self, pa, pb, n, hw] {
      for (long i = 0; i < n; ++i) {
        const double* gr = self->grad.data() + (i * 2 + 0) * hw;
        const double* gi = self->grad.data() + (i * 2 + 1) * hw;
        const double* ar = pa->val.data() + (i * 2 + 0) * hw;
        const double* ai = pa->val.data() + (i * 2 + 1) * hw;
        const double* br = pb->val.data() + (i * 2 + 0) * hw;
        const double* bi = pb->val.data() + (i * 2 + 1) * hw;
        if (pa->requires_grad) {
          double* xr = pa->accum_grad().data() + (i * 2 + 0) * hw;
          double* xi = pa->accum_grad().data() + (i * 2 + 1) * hw;
          for (long k = 0; k < hw; ++k) {
            xr[k] += gr[k] * br[k] + gi[k] * bi[k];
            xi[k] += -gr[k] * bi[k] + gi[k] * br[k];
          }
        }
        if (pb->requires_grad) {
          double* xr = pb->accum_grad().data() + (i * 2 + 0) * hw;
          double* xi = pb->accum_grad().data() + (i * 2 + 1) * hw;
          for (long k = 0; k < hw; ++k) {
            xr[k] += gr[k] * ar[k] + gi[k] * ai[k];
            xi[k] += -gr[k] * ai[k] + gi[k] * ar[k];
          }
        }
      }
    };
  }
  return v;
}

// Complex conjugate: negate the imaginary plane.
inline Var complex_conj(const Var& a) {
  detail::check_complex4(a, "complex_conj");
  const long n = a->val.shape()[0], hw = a->val.shape()[2] * a->val.shape()[3];
  Tensor out = a->val;
  for (long i = 0; i < n; ++i) {
    double* im = out.data() + (i * 2 + 1) * hw;
    for (long k = 0; k < hw; ++k) im[k] = -im[k];
  }
  Var v = detail::make_op(std::move(out), {a});
  if (v->requires_grad) {
    Node *self = v.get(), *pa = a.get();
    v->backward_fn = [self, pa, n, hw] {
      auto& g = pa->accum_grad();
      for (long i = 0; i < n; ++i) {
        const double* gr = self->grad.data() + (i * 2 + 0) * hw;
        const double* gi = self->grad.data() + (i * 2 + 1) * hw;
        double* xr = g.data() + (i * 2 + 0) * hw;
        double* xi = g.data() + (i * 2 + 1) * hw;
        for (long k = 0; k < hw; ++k) {
          xr[k] += gr[k];
          xi[k] -= gi[k];
        }
      }
    };
  }
  return v;
}

// Multiply every element by the 0/1 column mask along the last axis.
// Self-adjoint diagonal operator.
inline Var mask_cols(const Var& a, const std::vector<std::uint8_t>& cols) {
  const long rank = a->val.ndim();
  const long w = a->val.shape()[rank - 1];
  if (w != static_cast<long>(cols.size()))
    throw InvalidInput("mask_cols: width does not match mask");
  long batch = a->val.numel() / w;
  Tensor out = a->val;
  for (long b = 0; b < batch; ++b)
    for (long c = 0; c < w; ++c)
      if (!cols[c]) out[b * w + c] = 0.0;
  Var v = detail::make_op(std::move(out), {a});
  if (v->requires_grad) {
    Node *self = v.get(), *pa = a.get();
    auto mask = cols;
    v->backward_fn = [self, pa, mask, batch, w] {
      auto& g = pa->accum_grad();
      for (long b = 0; b < batch; ++b)
        for (long c = 0; c < w; ++c)
          if (mask[c]) g[b * w + c] += self->grad[b * w + c];
    };
  }
  return v;
}

}  // namespace varnet::ad
