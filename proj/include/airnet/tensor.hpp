#ifndef AIRNET_TENSOR_HPP
#define AIRNET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <vector>

#include "airnet/common.hpp"

namespace airnet {

using ShapeVec = std::vector<std::size_t>;

template <typename T>
class Tape;

// Dense row-major tensor. The trailing dimension is the channel axis; all
// leading dimensions are treated as rows by the matrix ops. Data is shared,
// so copies alias the same storage.
template <typename T>
struct Tensor {
  ShapeVec shape;
  std::shared_ptr<std::vector<T>> store;
  int node = -1;          // tape node id, -1 when not recorded
  Tape<T>* tape = nullptr;

  Tensor() = default;

  static Tensor zeros(ShapeVec s) {
    Tensor t;
    t.shape = std::move(s);
    t.store = std::make_shared<std::vector<T>>(count(t.shape), T(0));
    return t;
  }

  static Tensor from(ShapeVec s, std::vector<T> values) {
    Tensor t;
    t.shape = std::move(s);
    require(count(t.shape) == values.size(), "Tensor: shape/data size mismatch");
    t.store = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  static std::size_t count(const ShapeVec& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  bool defined() const { return static_cast<bool>(store); }
  std::size_t size() const { return store ? store->size() : 0; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }
  T* data() { return store->data(); }
  const T* data() const { return store->data(); }
  std::vector<T>& vec() { return *store; }
  const std::vector<T>& vec() const { return *store; }

  // Deep copy of the storage (drops any tape association).
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    if (store) t.store = std::make_shared<std::vector<T>>(*store);
    return t;
  }
};

// Metadata-only reshape; shares storage and tape node.
template <typename T>
inline Tensor<T> reshape(const Tensor<T>& t, ShapeVec s) {
  require(Tensor<T>::count(s) == t.size(), "reshape: element count mismatch");
  Tensor<T> out = t;
  out.shape = std::move(s);
  return out;
}

// Reverse-mode gradient tape. Nodes are appended in forward order, so node
// index order is a topological order; backward walks it once in reverse.
// A tape is built per forward pass and discarded after backward.
template <typename T>
class Tape {
 public:
  // Registers a leaf (parameter). The returned tensor shares storage.
  Tensor<T> watch(const Tensor<T>& t) {
    require(t.defined(), "watch: undefined tensor");
    Tensor<T> out = t;
    out.tape = this;
    out.node = add_node(t.size(), {});
    return out;
  }

  int add_node(std::size_t size, std::vector<int> parents,
               std::function<void(Tape&, int)> backward = nullptr) {
    nodes_.push_back(Node{std::move(parents), std::move(backward), size});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Reverse accumulation from a scalar loss. Leaves never reached keep zero
  // gradients. Callable once per tape.
  void backward(const Tensor<T>& loss) {
    require(loss.tape == this && loss.node >= 0, "backward: loss is not on this tape");
    require(loss.size() == 1, "backward: loss must be scalar");
    require(!ran_, "backward: tape already consumed");
    ran_ = true;
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(loss.node)] = {T(1)};
    for (int i = loss.node; i >= 0; --i) {
      auto& g = grads_[static_cast<std::size_t>(i)];
      if (g.empty()) continue;
      auto& node = nodes_[static_cast<std::size_t>(i)];
      if (node.backward) {
        node.backward(*this, i);
        g.clear();
        g.shrink_to_fit();
      }
    }
  }

  // Gradient of a watched tensor; zeros if the loss did not reach it.
  std::vector<T> grad(const Tensor<T>& t) const {
    require(t.tape == this && t.node >= 0, "grad: tensor is not on this tape");
    const auto& g = grads_[static_cast<std::size_t>(t.node)];
    if (g.empty()) return std::vector<T>(t.size(), T(0));
    return g;
  }

  std::vector<T>& grad_buf(int node) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].size, T(0));
    return g;
  }

  const std::vector<T>& out_grad(int node) const {
    return grads_[static_cast<std::size_t>(node)];
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;
    std::size_t size;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool ran_ = false;
};

namespace detail {

// Matrix kernels written so that every output element accumulates its terms
// in one fixed order, independent of batch size, buffer alignment, or worker
// count. That keeps row results bitwise reproducible: the same row in a
// different batch (or a duplicated row in the same batch) yields the same
// bits, which the encoder/decoder invariance contracts rely on.

// out (n x p) = x (n x m) * w (m x p), row-parallel
template <typename T>
inline void mm_rowind(const T* x, const T* w, T* out, std::size_t n, std::size_t m,
                      std::size_t p) {
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* acc = out + i * p;
      std::fill(acc, acc + p, T(0));
      const T* xr = x + i * m;
      for (std::size_t k = 0; k < m; ++k) {
        T a = xr[k];
        const T* wr = w + k * p;
        for (std::size_t j = 0; j < p; ++j) acc[j] += a * wr[j];
      }
    }
  }, 4096 / std::max<std::size_t>(m, 1) + 1);
}

// dx (n x m) += g (n x p) * w^T, via an explicit transpose of w
template <typename T>
inline void mm_accum_gwt(const T* g, const T* w, T* dx, std::size_t n, std::size_t m,
                         std::size_t p) {
  std::vector<T> wt(p * m);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < p; ++j) wt[j * m + k] = w[k * p + j];
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* acc = dx + i * m;
      const T* gr = g + i * p;
      for (std::size_t j = 0; j < p; ++j) {
        T a = gr[j];
        const T* wr = wt.data() + j * m;
        for (std::size_t k = 0; k < m; ++k) acc[k] += a * wr[k];
      }
    }
  }, 4096 / std::max<std::size_t>(p, 1) + 1);
}

// dw (m x p) += x^T (m x n) * g (n x p), parallel over column blocks
template <typename T>
inline void mm_accum_xtg(const T* x, const T* g, T* dw, std::size_t n, std::size_t m,
                         std::size_t p) {
  int workers = max_threads();
  std::size_t blocks = std::min<std::size_t>(static_cast<std::size_t>(workers),
                                             std::max<std::size_t>(p / 16, 1));
  parallel_for(blocks, [&](std::size_t blo, std::size_t bhi) {
    for (std::size_t b = blo; b < bhi; ++b) {
      std::size_t j0 = b * p / blocks, j1 = (b + 1) * p / blocks;
      for (std::size_t i = 0; i < n; ++i) {
        const T* gr = g + i * p;
        const T* xr = x + i * m;
        for (std::size_t k = 0; k < m; ++k) {
          T a = xr[k];
          T* acc = dw + k * p;
          for (std::size_t j = j0; j < j1; ++j) acc[j] += a * gr[j];
        }
      }
    }
  }, 1);
}

template <typename T>
inline Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> ins) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : ins) {
    if (t && t->defined() && t->tape) {
      require(!tape || tape == t->tape, "op: inputs live on different tapes");
      tape = t->tape;
    }
  }
  return tape;
}

template <typename T>
inline int node_of(const Tensor<T>& t) { return t.tape ? t.node : -1; }

template <typename T>
inline Tensor<T> finish(Tensor<T> out, const char* opname, Tape<T>* tape,
                        std::vector<int> parents,
                        std::function<void(Tape<T>&, int)> backward) {
  check_finite(out.vec(), opname);
  if (tape) {
    std::vector<int> live;
    for (int p : parents)
      if (p >= 0) live.push_back(p);
    if (!live.empty()) {
      out.tape = tape;
      out.node = tape->add_node(out.size(), std::move(live), std::move(backward));
    }
  }
  return out;
}

}  // namespace detail

// ---- primitive differentiable ops -----------------------------------------

// Affine map X*W (+ b). X may carry extra leading dims; the last dim must
// match W's rows. b is optional (undefined tensor -> no bias).
template <typename T>
inline Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = {}) {
  require(x.defined() && w.defined(), "linear: undefined input");
  require(w.shape.size() == 2, "linear: W must be 2-D");
  std::size_t m = w.shape[0], p = w.shape[1];
  require(x.cols() == m, "linear: inner dimensions mismatch");
  if (b.defined()) require(b.size() == p, "linear: bias size mismatch");

  Tensor<T> out;
  out.shape = x.shape;
  out.shape.back() = p;
  out.store = std::make_shared<std::vector<T>>(x.rows() * p);
  std::size_t rows = x.rows();
  detail::mm_rowind(x.data(), w.data(), out.data(), rows, m, p);
  if (b.defined()) {
    const T* bv = b.data();
    T* ov = out.data();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p; ++j) ov[i * p + j] += bv[j];
  }

  Tape<T>* tape = detail::common_tape<T>({&x, &w, &b});
  if (!tape) return detail::finish<T>(std::move(out), "linear", nullptr, {}, nullptr);

  int xn = detail::node_of(x), wn = detail::node_of(w), bn = detail::node_of(b);
  auto xs = x.store, ws = w.store;
  auto bw = [xn, wn, bn, rows, m, p, xs, ws](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    if (xn >= 0)
      detail::mm_accum_gwt(go.data(), ws->data(), tp.grad_buf(xn).data(), rows, m, p);
    if (wn >= 0)
      detail::mm_accum_xtg(xs->data(), go.data(), tp.grad_buf(wn).data(), rows, m, p);
    if (bn >= 0) {
      auto& gb = tp.grad_buf(bn);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < p; ++j) gb[j] += go[i * p + j];
    }
  };
  return detail::finish<T>(std::move(out), "linear", tape, {xn, wn, bn}, bw);
}

template <typename T>
inline Tensor<T> relu(const Tensor<T>& x) {
  require(x.defined(), "relu: undefined input");
  Tensor<T> out;
  out.shape = x.shape;
  out.store = std::make_shared<std::vector<T>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.vec()[i] = x.vec()[i] > T(0) ? x.vec()[i] : T(0);
  Tape<T>* tape = x.tape;
  if (!tape) return detail::finish<T>(std::move(out), "relu", nullptr, {}, nullptr);
  int xn = x.node;
  auto xs = x.store;
  auto bw = [xn, xs](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    auto& gx = tp.grad_buf(xn);
    for (std::size_t i = 0; i < go.size(); ++i)
      if ((*xs)[i] > T(0)) gx[i] += go[i];
  };
  return detail::finish<T>(std::move(out), "relu", tape, {xn}, bw);
}

namespace detail {

enum class EwKind { Add, Sub, Mul };

template <typename T>
inline Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, EwKind kind,
                             const char* opname) {
  require(a.defined() && b.defined(), "elementwise: undefined input");
  require(a.size() == b.size(), "elementwise: size mismatch");
  Tensor<T> out;
  out.shape = a.shape;
  out.store = std::make_shared<std::vector<T>>(a.size());
  const auto& av = a.vec();
  const auto& bv = b.vec();
  auto& ov = out.vec();
  switch (kind) {
    case EwKind::Add: for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i]; break;
    case EwKind::Sub: for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i]; break;
    case EwKind::Mul: for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i]; break;
  }
  Tape<T>* tape = common_tape<T>({&a, &b});
  if (!tape) return finish<T>(std::move(out), opname, nullptr, {}, nullptr);
  int an = node_of(a), bn = node_of(b);
  auto as = a.store, bs = b.store;
  auto bw = [an, bn, as, bs, kind](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    if (an >= 0) {
      auto& ga = tp.grad_buf(an);
      if (kind == EwKind::Mul)
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (*bs)[i];
      else
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (bn >= 0) {
      auto& gb = tp.grad_buf(bn);
      if (kind == EwKind::Mul)
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * (*as)[i];
      else if (kind == EwKind::Sub)
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      else
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
    }
  };
  return finish<T>(std::move(out), opname, tape, {an, bn}, bw);
}

}  // namespace detail

template <typename T>
inline Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::elementwise(a, b, detail::EwKind::Add, "add");
}
template <typename T>
inline Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::elementwise(a, b, detail::EwKind::Sub, "sub");
}
template <typename T>
inline Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::elementwise(a, b, detail::EwKind::Mul, "hadamard");
}

// Scales row r by the constant weights[r]. Weights are not differentiated.
template <typename T>
inline Tensor<T> row_scale(const Tensor<T>& x, std::vector<T> weights) {
  require(x.defined(), "row_scale: undefined input");
  require(weights.size() == x.rows(), "row_scale: weight count != rows");
  std::size_t d = x.cols();
  Tensor<T> out;
  out.shape = x.shape;
  out.store = std::make_shared<std::vector<T>>(x.size());
  for (std::size_t r = 0; r < weights.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) out.vec()[r * d + c] = weights[r] * x.vec()[r * d + c];
  Tape<T>* tape = x.tape;
  if (!tape) return detail::finish<T>(std::move(out), "row_scale", nullptr, {}, nullptr);
  int xn = x.node;
  auto wshared = std::make_shared<std::vector<T>>(std::move(weights));
  auto bw = [xn, wshared, d](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    auto& gx = tp.grad_buf(xn);
    for (std::size_t r = 0; r < wshared->size(); ++r)
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += (*wshared)[r] * go[r * d + c];
  };
  return detail::finish<T>(std::move(out), "row_scale", tape, {xn}, bw);
}

// Gathers rows of x by index; backward scatter-adds.
template <typename T>
inline Tensor<T> gather_rows(const Tensor<T>& x, std::vector<int> idx) {
  require(x.defined(), "gather_rows: undefined input");
  std::size_t d = x.cols(), n = x.rows();
  for (int i : idx) require(i >= 0 && static_cast<std::size_t>(i) < n, "gather_rows: index out of range");
  Tensor<T> out;
  out.shape = {idx.size(), d};
  out.store = std::make_shared<std::vector<T>>(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x.data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
  Tape<T>* tape = x.tape;
  if (!tape) return detail::finish<T>(std::move(out), "gather_rows", nullptr, {}, nullptr);
  int xn = x.node;
  auto ishared = std::make_shared<std::vector<int>>(std::move(idx));
  auto bw = [xn, ishared, d](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    auto& gx = tp.grad_buf(xn);
    for (std::size_t r = 0; r < ishared->size(); ++r) {
      T* dst = gx.data() + static_cast<std::size_t>((*ishared)[r]) * d;
      const T* src = go.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  };
  return detail::finish<T>(std::move(out), "gather_rows", tape, {xn}, bw);
}

template <typename T>
inline Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.defined() && b.defined(), "concat_rows: undefined input");
  require(a.cols() == b.cols(), "concat_rows: column mismatch");
  std::size_t d = a.cols();
  Tensor<T> out;
  out.shape = {a.rows() + b.rows(), d};
  out.store = std::make_shared<std::vector<T>>(out.shape[0] * d);
  std::copy(a.vec().begin(), a.vec().end(), out.vec().begin());
  std::copy(b.vec().begin(), b.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(a.size()));
  Tape<T>* tape = detail::common_tape<T>({&a, &b});
  if (!tape) return detail::finish<T>(std::move(out), "concat_rows", nullptr, {}, nullptr);
  int an = detail::node_of(a), bn = detail::node_of(b);
  std::size_t asize = a.size();
  auto bw = [an, bn, asize](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    if (an >= 0) {
      auto& ga = tp.grad_buf(an);
      for (std::size_t i = 0; i < asize; ++i) ga[i] += go[i];
    }
    if (bn >= 0) {
      auto& gb = tp.grad_buf(bn);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[asize + i];
    }
  };
  return detail::finish<T>(std::move(out), "concat_rows", tape, {an, bn}, bw);
}

template <typename T>
inline Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.defined() && b.defined(), "concat_cols: undefined input");
  require(a.rows() == b.rows(), "concat_cols: row mismatch");
  std::size_t n = a.rows(), da = a.cols(), db = b.cols();
  Tensor<T> out;
  out.shape = {n, da + db};
  out.store = std::make_shared<std::vector<T>>(n * (da + db));
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(b.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  Tape<T>* tape = detail::common_tape<T>({&a, &b});
  if (!tape) return detail::finish<T>(std::move(out), "concat_cols", nullptr, {}, nullptr);
  int an = detail::node_of(a), bn = detail::node_of(b);
  auto bw = [an, bn, n, da, db](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    if (an >= 0) {
      auto& ga = tp.grad_buf(an);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < da; ++c) ga[r * da + c] += go[r * (da + db) + c];
    }
    if (bn >= 0) {
      auto& gb = tp.grad_buf(bn);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < db; ++c) gb[r * db + c] += go[r * (da + db) + da + c];
    }
  };
  return detail::finish<T>(std::move(out), "concat_cols", tape, {an, bn}, bw);
}

// Channel-wise softmax over the neighborhood axis of an (n, k, d) tensor:
// for each query and channel, the k scores normalize to a simplex point.
template <typename T>
inline Tensor<T> channel_softmax(const Tensor<T>& s) {
  require(s.defined(), "channel_softmax: undefined input");
  require(s.shape.size() == 3, "channel_softmax: expected (n, k, d) tensor");
  std::size_t n = s.shape[0], k = s.shape[1], d = s.shape[2];
  require(k >= 1, "channel_softmax: k must be >= 1");
  Tensor<T> out;
  out.shape = s.shape;
  out.store = std::make_shared<std::vector<T>>(s.size());
  const T* sv = s.data();
  T* ov = out.data();
  for (std::size_t q = 0; q < n; ++q) {
    const T* base = sv + q * k * d;
    T* obase = ov + q * k * d;
    for (std::size_t c = 0; c < d; ++c) {
      T m = base[c];
      for (std::size_t j = 1; j < k; ++j) m = std::max(m, base[j * d + c]);
      T z = T(0);
      for (std::size_t j = 0; j < k; ++j) {
        T e = std::exp(base[j * d + c] - m);
        obase[j * d + c] = e;
        z += e;
      }
      for (std::size_t j = 0; j < k; ++j) obase[j * d + c] /= z;
    }
  }
  Tape<T>* tape = s.tape;
  if (!tape) return detail::finish<T>(std::move(out), "channel_softmax", nullptr, {}, nullptr);
  int sn = s.node;
  auto ys = out.store;
  auto bw = [sn, ys, n, k, d](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    auto& gs = tp.grad_buf(sn);
    const T* y = ys->data();
    for (std::size_t q = 0; q < n; ++q) {
      std::size_t off = q * k * d;
      for (std::size_t c = 0; c < d; ++c) {
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += go[off + j * d + c] * y[off + j * d + c];
        for (std::size_t j = 0; j < k; ++j)
          gs[off + j * d + c] += y[off + j * d + c] * (go[off + j * d + c] - dot);
      }
    }
  };
  return detail::finish<T>(std::move(out), "channel_softmax", tape, {sn}, bw);
}

// Sums each consecutive group of k rows: (g*k) x d -> g x d.
template <typename T>
inline Tensor<T> segment_sum(const Tensor<T>& x, std::size_t k) {
  require(x.defined(), "segment_sum: undefined input");
  require(k >= 1 && x.rows() % k == 0, "segment_sum: rows not divisible by k");
  std::size_t g = x.rows() / k, d = x.cols();
  Tensor<T> out = Tensor<T>::zeros({g, d});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* src = x.data() + r * d;
    T* dst = out.data() + (r / k) * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  Tape<T>* tape = x.tape;
  if (!tape) return detail::finish<T>(std::move(out), "segment_sum", nullptr, {}, nullptr);
  int xn = x.node;
  std::size_t rows = x.rows();
  auto bw = [xn, rows, k, d](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    auto& gx = tp.grad_buf(xn);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = go.data() + (r / k) * d;
      T* dst = gx.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  };
  return detail::finish<T>(std::move(out), "segment_sum", tape, {xn}, bw);
}

// Per-channel max over each consecutive group of k rows; the gradient routes
// to the first argmax row of the group.
template <typename T>
inline Tensor<T> segment_max(const Tensor<T>& x, std::size_t k) {
  require(x.defined(), "segment_max: undefined input");
  require(k >= 1 && x.rows() % k == 0, "segment_max: rows not divisible by k");
  std::size_t g = x.rows() / k, d = x.cols();
  Tensor<T> out = Tensor<T>::zeros({g, d});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(g * d);
  for (std::size_t grp = 0; grp < g; ++grp) {
    for (std::size_t c = 0; c < d; ++c) {
      std::size_t best = grp * k;
      T bv = x.vec()[best * d + c];
      for (std::size_t j = 1; j < k; ++j) {
        T v = x.vec()[(grp * k + j) * d + c];
        if (v > bv) {
          bv = v;
          best = grp * k + j;
        }
      }
      out.vec()[grp * d + c] = bv;
      (*argmax)[grp * d + c] = static_cast<std::uint32_t>(best);
    }
  }
  Tape<T>* tape = x.tape;
  if (!tape) return detail::finish<T>(std::move(out), "segment_max", nullptr, {}, nullptr);
  int xn = x.node;
  auto bw = [xn, argmax, d](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    auto& gx = tp.grad_buf(xn);
    for (std::size_t i = 0; i < go.size(); ++i)
      gx[static_cast<std::size_t>((*argmax)[i]) * d + (i % d)] += go[i];
  };
  return detail::finish<T>(std::move(out), "segment_max", tape, {xn}, bw);
}

// Per-channel max over all rows: n x d -> d.
template <typename T>
inline Tensor<T> maxpool_rows(const Tensor<T>& x) {
  require(x.defined() && x.rows() >= 1, "maxpool_rows: need at least one row");
  return reshape(segment_max(x, x.rows()), {x.cols()});
}

// Sum of all elements -> scalar.
template <typename T>
inline Tensor<T> sum_all(const Tensor<T>& x) {
  require(x.defined(), "sum_all: undefined input");
  T acc = T(0);
  for (const T& v : x.vec()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  Tape<T>* tape = x.tape;
  if (!tape) return detail::finish<T>(std::move(out), "sum_all", nullptr, {}, nullptr);
  int xn = x.node;
  auto bw = [xn](Tape<T>& tp, int self) {
    const T g = tp.out_grad(self)[0];
    auto& gx = tp.grad_buf(xn);
    for (T& v : gx) v += g;
  };
  return detail::finish<T>(std::move(out), "sum_all", tape, {xn}, bw);
}

template <typename T>
inline Tensor<T> sigmoid(const Tensor<T>& x) {
  require(x.defined(), "sigmoid: undefined input");
  Tensor<T> out;
  out.shape = x.shape;
  out.store = std::make_shared<std::vector<T>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    T v = x.vec()[i];
    out.vec()[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                             : std::exp(v) / (T(1) + std::exp(v));
  }
  Tape<T>* tape = x.tape;
  if (!tape) return detail::finish<T>(std::move(out), "sigmoid", nullptr, {}, nullptr);
  int xn = x.node;
  auto ys = out.store;
  auto bw = [xn, ys](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    auto& gx = tp.grad_buf(xn);
    for (std::size_t i = 0; i < go.size(); ++i) {
      T y = (*ys)[i];
      gx[i] += go[i] * y * (T(1) - y);
    }
  };
  return detail::finish<T>(std::move(out), "sigmoid", tape, {xn}, bw);
}

// Mean binary cross-entropy computed directly from logits, which stays finite
// for any finite input. Labels must be 0/1 and are not differentiated.
template <typename T>
inline Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, std::vector<T> labels) {
  require(logits.defined(), "bce_with_logits_mean: undefined input");
  require(logits.size() == labels.size(), "bce_with_logits_mean: size mismatch");
  require(!labels.empty(), "bce_with_logits_mean: empty batch");
  for (T y : labels) require(y == T(0) || y == T(1), "bce_with_logits_mean: labels must be 0/1");
  std::size_t n = labels.size();
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    T z = logits.vec()[i];
    T y = labels[i];
    acc += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  Tape<T>* tape = logits.tape;
  if (!tape) return detail::finish<T>(std::move(out), "bce_with_logits_mean", nullptr, {}, nullptr);
  int zn = logits.node;
  auto zs = logits.store;
  auto ls = std::make_shared<std::vector<T>>(std::move(labels));
  auto bw = [zn, zs, ls, n](Tape<T>& tp, int self) {
    const T g = tp.out_grad(self)[0] / static_cast<T>(n);
    auto& gz = tp.grad_buf(zn);
    for (std::size_t i = 0; i < n; ++i) {
      T z = (*zs)[i];
      T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
      gz[i] += g * (s - (*ls)[i]);
    }
  };
  return detail::finish<T>(std::move(out), "bce_with_logits_mean", tape, {zn}, bw);
}

}  // namespace airnet

#endif
