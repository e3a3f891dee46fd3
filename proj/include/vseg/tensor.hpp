#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vseg/rng.hpp"

namespace vseg {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

/// C = op(A) * op(B) + beta * C, all row-major. Eigen does the heavy lifting.
inline void gemm(const float* a, const float* b, float* c, int m, int k, int n,
                 bool trans_a, bool trans_b, float beta) {
  using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> cm(c, m, n);
  CMap am(a, trans_a ? k : m, trans_a ? m : k);
  CMap bm(b, trans_b ? n : k, trans_b ? k : n);
  if (beta == 0.0f) {
    if (!trans_a && !trans_b) cm.noalias() = am * bm;
    else if (trans_a && !trans_b) cm.noalias() = am.transpose() * bm;
    else if (!trans_a && trans_b) cm.noalias() = am * bm.transpose();
    else cm.noalias() = am.transpose() * bm.transpose();
  } else {
    if (!trans_a && !trans_b) cm.noalias() += am * bm;
    else if (trans_a && !trans_b) cm.noalias() += am.transpose() * bm;
    else if (!trans_a && trans_b) cm.noalias() += am * bm.transpose();
    else cm.noalias() += am.transpose() * bm.transpose();
  }
}

}  // namespace detail

struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // allocated lazily; same length as data when present
  bool requires_grad = false;
  bool backward_ran = false;  // set on the node backward() was called on

  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;  // null for leaves

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

/// Handle to a node of the dynamic computation graph. Copying a Tensor copies
/// the handle, not the buffer. Every op allocates a fresh output node; the
/// tape is rebuilt on each forward pass.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false) {
    if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
      throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive extent in shape " + shape_str(shape));
    }
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<float> d(static_cast<std::size_t>(numel(shape)), 0.0f);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, float value, bool requires_grad = false) {
    std::vector<float> d(static_cast<std::size_t>(numel(shape)), value);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(float value) { return from_data({}, {value}); }

  /// Uniform in [lo, hi), seeded; used for weight init and test inputs.
  static Tensor rand_uniform(Shape shape, Rng& rng, float lo, float hi, bool requires_grad = false) {
    std::vector<float> d(static_cast<std::size_t>(numel(shape)));
    for (auto& v : d) v = rng.uniformf(lo, hi);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->data.size()); }
  std::vector<float>& data() { return node_->data; }
  const std::vector<float>& data() const { return node_->data; }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient buffer; valid after backward() reached this tensor.
  const std::vector<float>& grad() const {
    if (node_->grad.empty()) throw std::runtime_error("Tensor: gradient not populated");
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
  }

  float item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(size()) + " elements");
    return node_->data[0];
  }

  float at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank()) throw std::invalid_argument("Tensor::at: rank mismatch");
    std::int64_t off = 0;
    int i = 0;
    for (int v : idx) {
      off = off * node_->shape[static_cast<std::size_t>(i)] + v;
      ++i;
    }
    return node_->data[static_cast<std::size_t>(off)];
  }

  /// Same values as a fresh leaf with no history and no gradient tracking.
  Tensor detach() const { return from_data(node_->shape, node_->data, false); }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---------------------------------------------------------------------------
// Graph: explicit topological record of the primitive ops reachable from a
// root. backward() builds one and walks it in reverse exactly once.
// ---------------------------------------------------------------------------

struct Graph {
  std::vector<TensorNode*> order;  // every node after all of its inputs

  static Graph build(const Tensor& root) {
    Graph g;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    std::vector<TensorNode*> seen;
    auto visited = [&seen](TensorNode* n) {
      return std::find(seen.begin(), seen.end(), n) != seen.end();
    };
    stack.push_back({root.node().get(), 0});
    seen.push_back(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorNode* p = node->parents[next++].get();
        if (!visited(p)) {
          seen.push_back(p);
          stack.push_back({p, 0});
        }
      } else {
        g.order.push_back(node);
        stack.pop_back();
      }
    }
    return g;
  }
};

/// Reverse-mode sweep from a scalar loss. Populates grad for every reachable
/// tensor with requires_grad. Running it twice on the same root is an error.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  TensorNode* root = loss.node().get();
  if (root->backward_ran) {
    throw std::runtime_error("backward: already called on this graph; rebuild the forward pass first");
  }
  Graph g = Graph::build(loss);
  for (TensorNode* n : g.order) {
    if (n->requires_grad) n->ensure_grad();
  }
  root->grad.assign(1, 1.0f);
  for (auto it = g.order.rbegin(); it != g.order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
  }
  root->backward_ran = true;
}

// ---------------------------------------------------------------------------
// Broadcasting (numpy-style, aligned on trailing dimensions)
// ---------------------------------------------------------------------------

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* opname) {
  const int ra = static_cast<int>(a.size());
  const int rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int da = i < ra ? a[static_cast<std::size_t>(ra - 1 - i)] : 1;
    const int db = i < rb ? b[static_cast<std::size_t>(rb - 1 - i)] : 1;
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument(std::string(opname) + ": shapes " + shape_str(a) + " and " +
                                  shape_str(b) + " are not broadcast-compatible");
    }
    out[static_cast<std::size_t>(r - 1 - i)] = std::max(da, db);
  }
  return out;
}

/// Strides of `s` aligned to broadcast result `out`; 0 where s broadcasts.
inline std::vector<std::int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  const int rs = static_cast<int>(s.size());
  const int ro = static_cast<int>(out.size());
  std::vector<std::int64_t> strides(static_cast<std::size_t>(ro), 0);
  std::int64_t stride = 1;
  for (int i = 0; i < rs; ++i) {
    const int d = s[static_cast<std::size_t>(rs - 1 - i)];
    strides[static_cast<std::size_t>(ro - 1 - i)] = (d == 1) ? 0 : stride;
    stride *= d;
  }
  return strides;
}

inline std::int64_t broadcast_offset(std::int64_t linear, const Shape& out,
                                     const std::vector<std::int64_t>& strides) {
  std::int64_t off = 0;
  for (int i = static_cast<int>(out.size()) - 1; i >= 0; --i) {
    const std::int64_t d = out[static_cast<std::size_t>(i)];
    off += (linear % d) * strides[static_cast<std::size_t>(i)];
    linear /= d;
  }
  return off;
}

/// Sums `g` (shaped `from`) down to shape `to` (inverse of broadcasting).
inline std::vector<float> reduce_to_shape(const std::vector<float>& g, const Shape& from, const Shape& to) {
  std::vector<float> out(static_cast<std::size_t>(numel(to)), 0.0f);
  const auto strides = broadcast_strides(to, from);
  const std::int64_t n = numel(from);
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(broadcast_offset(i, from, strides))] += g[static_cast<std::size_t>(i)];
  }
  return out;
}

inline void accumulate_grad(const std::shared_ptr<TensorNode>& node, const std::vector<float>& g,
                            const Shape& gshape) {
  if (!node->requires_grad) return;
  node->ensure_grad();
  if (gshape == node->shape) {
    for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
  } else {
    const auto reduced = reduce_to_shape(g, gshape, node->shape);
    for (std::size_t i = 0; i < reduced.size(); ++i) node->grad[i] += reduced[i];
  }
}

inline Tensor make_op_result(Shape shape, std::vector<float> data,
                             std::vector<std::shared_ptr<TensorNode>> parents,
                             std::function<void(TensorNode&)> backward_fn) {
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  Tensor t = Tensor::from_data(std::move(shape), std::move(data), req);
  if (req) {
    t.node()->parents = std::move(parents);
    t.node()->backward_fn = std::move(backward_fn);
  }
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, BwdA dfda, BwdB dfdb) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const std::int64_t n = numel(out_shape);
  std::vector<float> out(static_cast<std::size_t>(n));
  const bool same = a.shape() == out_shape && b.shape() == out_shape;
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  const auto& da = a.data();
  const auto& db = b.data();
  if (same) {
    for (std::int64_t i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i)] = fwd(da[static_cast<std::size_t>(i)], db[static_cast<std::size_t>(i)]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const auto ia = static_cast<std::size_t>(broadcast_offset(i, out_shape, sa));
      const auto ib = static_cast<std::size_t>(broadcast_offset(i, out_shape, sb));
      out[static_cast<std::size_t>(i)] = fwd(da[ia], db[ib]);
    }
  }
  auto an = a.node();
  auto bn = b.node();
  auto backward = [an, bn, out_shape, same, sa, sb, dfda, dfdb](TensorNode& self) {
    const std::int64_t n = numel(out_shape);
    std::vector<float> ga, gb;
    if (an->requires_grad) ga.assign(static_cast<std::size_t>(n), 0.0f);
    if (bn->requires_grad) gb.assign(static_cast<std::size_t>(n), 0.0f);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::size_t ia = same ? static_cast<std::size_t>(i)
                                  : static_cast<std::size_t>(broadcast_offset(i, out_shape, sa));
      const std::size_t ib = same ? static_cast<std::size_t>(i)
                                  : static_cast<std::size_t>(broadcast_offset(i, out_shape, sb));
      const float g = self.grad[static_cast<std::size_t>(i)];
      const float va = an->data[ia];
      const float vb = bn->data[ib];
      if (an->requires_grad) ga[static_cast<std::size_t>(i)] = g * dfda(va, vb);
      if (bn->requires_grad) gb[static_cast<std::size_t>(i)] = g * dfdb(va, vb);
    }
    if (an->requires_grad) accumulate_grad(an, ga, out_shape);
    if (bn->requires_grad) accumulate_grad(bn, gb, out_shape);
  };
  return make_op_result(out_shape, std::move(out), {an, bn}, std::move(backward));
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dfdx) {
  const std::int64_t n = numel(a.shape());
  std::vector<float> out(static_cast<std::size_t>(n));
  const auto& da = a.data();
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fwd(da[static_cast<std::size_t>(i)]);
  auto an = a.node();
  auto backward = [an, dfdx](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      an->grad[i] += self.grad[i] * dfdx(an->data[i], self.data[i]);
    }
  };
  return make_op_result(a.shape(), std::move(out), {an}, std::move(backward));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", a, b, [](float x, float y) { return x + y; },
      [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", a, b, [](float x, float y) { return x - y; },
      [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul", a, b, [](float x, float y) { return x * y; },
      [](float, float y) { return y; }, [](float x, float) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "div", a, b, [](float x, float y) { return x / y; },
      [](float, float y) { return 1.0f / y; }, [](float x, float y) { return -x / (y * y); });
}

/// relu'(0) is defined as 0.
inline Tensor relu(const Tensor& a) {
  return detail::unary_op(
      a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary_op(
      a, [](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; });
}

/// Elementwise power with a constant exponent.
inline Tensor pow(const Tensor& a, float e) {
  return detail::unary_op(
      a, [e](float x) { return std::pow(x, e); },
      [e](float x, float) { return e * std::pow(x, e - 1.0f); });
}

inline Tensor mul(const Tensor& a, float s) { return mul(a, Tensor::scalar(s)); }
inline Tensor add(const Tensor& a, float s) { return add(a, Tensor::scalar(s)); }
inline Tensor neg(const Tensor& a) { return mul(a, -1.0f); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// matmul (rank-2)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  const int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  std::vector<float> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  detail::gemm(a.data().data(), b.data().data(), out.data(), m, k, n, false, false, 0.0f);
  auto an = a.node();
  auto bn = b.node();
  auto backward = [an, bn, m, k, n](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();  // dA = G * B^T
      detail::gemm(self.grad.data(), bn->data.data(), an->grad.data(), m, n, k, false, true, 1.0f);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();  // dB = A^T * G
      detail::gemm(an->data.data(), self.grad.data(), bn->grad.data(), k, m, n, true, false, 1.0f);
    }
  };
  return detail::make_op_result({m, n}, std::move(out), {an, bn}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

enum class ReduceKind { Sum, Mean, Max };

inline Tensor reduce(ReduceKind kind, const Tensor& t, std::vector<int> axes, bool keepdims) {
  const int rank = t.rank();
  if (axes.empty()) {
    for (int i = 0; i < rank; ++i) axes.push_back(i);
  }
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (int ax : axes) {
    if (ax < 0 || ax >= rank) {
      throw std::invalid_argument("reduce: invalid axis " + std::to_string(ax) + " for shape " +
                                  shape_str(t.shape()));
    }
  }
  std::vector<bool> reduced(static_cast<std::size_t>(rank), false);
  for (int ax : axes) reduced[static_cast<std::size_t>(ax)] = true;

  Shape kept_shape;  // input shape with reduced dims set to 1
  Shape out_shape;
  std::int64_t reduce_count = 1;
  for (int i = 0; i < rank; ++i) {
    const int d = t.shape()[static_cast<std::size_t>(i)];
    if (reduced[static_cast<std::size_t>(i)]) {
      kept_shape.push_back(1);
      reduce_count *= d;
      if (keepdims) out_shape.push_back(1);
    } else {
      kept_shape.push_back(d);
      out_shape.push_back(d);
    }
  }

  const std::int64_t out_n = numel(kept_shape);
  const std::int64_t in_n = numel(t.shape());
  const auto out_strides = broadcast_strides(kept_shape, t.shape());

  std::vector<float> out;
  std::vector<std::int64_t> argmax;  // Max only: input offset feeding each output
  const auto& data = t.data();
  if (kind == ReduceKind::Max) {
    out.assign(static_cast<std::size_t>(out_n), -std::numeric_limits<float>::infinity());
    argmax.assign(static_cast<std::size_t>(out_n), -1);
    for (std::int64_t i = 0; i < in_n; ++i) {
      const auto o = static_cast<std::size_t>(broadcast_offset(i, t.shape(), out_strides));
      // strict > keeps the first occurrence on ties
      if (data[static_cast<std::size_t>(i)] > out[o]) {
        out[o] = data[static_cast<std::size_t>(i)];
        argmax[o] = i;
      }
    }
  } else {
    out.assign(static_cast<std::size_t>(out_n), 0.0f);
    for (std::int64_t i = 0; i < in_n; ++i) {
      out[static_cast<std::size_t>(broadcast_offset(i, t.shape(), out_strides))] +=
          data[static_cast<std::size_t>(i)];
    }
    if (kind == ReduceKind::Mean) {
      const float inv = 1.0f / static_cast<float>(reduce_count);
      for (auto& v : out) v *= inv;
    }
  }

  auto tn = t.node();
  Shape in_shape = t.shape();
  auto backward = [tn, kind, in_shape, out_strides, reduce_count, argmax](TensorNode& self) {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    if (kind == ReduceKind::Max) {
      for (std::size_t o = 0; o < argmax.size(); ++o) {
        tn->grad[static_cast<std::size_t>(argmax[o])] += self.grad[o];
      }
      return;
    }
    const float scale = kind == ReduceKind::Mean ? 1.0f / static_cast<float>(reduce_count) : 1.0f;
    const std::int64_t in_n = numel(in_shape);
    for (std::int64_t i = 0; i < in_n; ++i) {
      const auto o = static_cast<std::size_t>(broadcast_offset(i, in_shape, out_strides));
      tn->grad[static_cast<std::size_t>(i)] += self.grad[o] * scale;
    }
  };
  return make_op_result(std::move(out_shape), std::move(out), {tn}, std::move(backward));
}

}  // namespace detail

inline Tensor sum(const Tensor& t, std::vector<int> axes = {}, bool keepdims = false) {
  return detail::reduce(detail::ReduceKind::Sum, t, std::move(axes), keepdims);
}
inline Tensor mean(const Tensor& t, std::vector<int> axes = {}, bool keepdims = false) {
  return detail::reduce(detail::ReduceKind::Mean, t, std::move(axes), keepdims);
}
inline Tensor max(const Tensor& t, std::vector<int> axes = {}, bool keepdims = false) {
  return detail::reduce(detail::ReduceKind::Max, t, std::move(axes), keepdims);
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& t, Shape shape) {
  if (numel(shape) != t.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(t.shape()) + " as " + shape_str(shape));
  }
  auto tn = t.node();
  auto backward = [tn](TensorNode& self) {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) tn->grad[i] += self.grad[i];
  };
  return detail::make_op_result(std::move(shape), t.data(), {tn}, std::move(backward));
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: invalid axis " + std::to_string(axis));
  Shape out_shape = parts[0].shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[static_cast<std::size_t>(i)];
  int axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != axis && p.shape()[static_cast<std::size_t>(i)] != out_shape[static_cast<std::size_t>(i)]) {
        throw std::invalid_argument("concat: shape mismatch at axis " + std::to_string(i) + ": " +
                                    shape_str(p.shape()) + " vs " + shape_str(out_shape));
      }
    }
    axis_total += p.shape()[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  std::vector<float> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<std::int64_t> blocks;  // per-part axis block size in elements
  std::int64_t pos = 0;
  for (const auto& p : parts) {
    const std::int64_t block = static_cast<std::int64_t>(p.shape()[static_cast<std::size_t>(axis)]) * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + o * block, block,
                  out.begin() + o * (static_cast<std::int64_t>(axis_total) * inner) + pos);
    }
    pos += block;
    blocks.push_back(block);
    parents.push_back(p.node());
  }

  auto parents_copy = parents;
  auto backward = [parents_copy, blocks, outer, inner, axis_total](TensorNode& self) {
    std::int64_t pos = 0;
    const std::int64_t row = static_cast<std::int64_t>(axis_total) * inner;
    for (std::size_t pi = 0; pi < parents_copy.size(); ++pi) {
      const auto& p = parents_copy[pi];
      const std::int64_t block = blocks[pi];
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
          const float* g = self.grad.data() + o * row + pos;
          float* dst = p->grad.data() + o * block;
          for (std::int64_t i = 0; i < block; ++i) dst[i] += g[i];
        }
      }
      pos += block;
    }
  };
  return detail::make_op_result(std::move(out_shape), std::move(out), std::move(parents), std::move(backward));
}

}  // namespace vseg
