#ifndef AIRNET_NN_HPP
#define AIRNET_NN_HPP

#include <cmath>
#include <string>
#include <vector>

#include "airnet/rng.hpp"
#include "airnet/tensor.hpp"

namespace airnet {

enum class Mode { Train, Eval };

enum class ParamKind { Weight, Buffer };

// Weights drawn uniform in +-sqrt(1/fan_in); biases start at zero.
template <typename T>
inline void init_linear(Tensor<T>& w, Tensor<T>& b, RngStream stream) {
  std::size_t fan_in = w.shape[0];
  double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : w.vec()) v = static_cast<T>(uniform_in(stream, -bound, bound));
  if (b.defined())
    for (auto& v : b.vec()) v = T(0);
}

// Fully connected stack with a per-layer activation marker.
template <typename T>
struct Mlp {
  struct Layer {
    Tensor<T> w;  // d_in x d_out
    Tensor<T> b;  // d_out
    bool relu_after = false;
  };
  std::vector<Layer> layers;

  static Mlp make(const std::vector<std::size_t>& dims, const std::vector<bool>& relu_marks) {
    require(dims.size() >= 2 && relu_marks.size() == dims.size() - 1, "Mlp: bad layer spec");
    Mlp m;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      require(dims[i] >= 1 && dims[i + 1] >= 1, "Mlp: zero-width layer");
      Layer l;
      l.w = Tensor<T>::zeros({dims[i], dims[i + 1]});
      l.b = Tensor<T>::zeros({dims[i + 1]});
      l.relu_after = relu_marks[i];
      m.layers.push_back(std::move(l));
    }
    return m;
  }

  // Two-layer MLP with a single ReLU between the layers and none at the output.
  static Mlp two_layer(std::size_t d_in, std::size_t hidden, std::size_t d_out) {
    return make({d_in, hidden, d_out}, {true, false});
  }

  std::size_t in_dim() const { return layers.front().w.shape[0]; }
  std::size_t out_dim() const { return layers.back().w.shape[1]; }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (const Layer& l : layers) {
      h = linear(h, l.w, l.b);
      if (l.relu_after) h = relu(h);
    }
    return h;
  }

  void init(RngStream stream) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      init_linear(layers[i].w, layers[i].b, split(stream, i));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      f(prefix + ".l" + std::to_string(i) + ".w", layers[i].w, ParamKind::Weight);
      f(prefix + ".l" + std::to_string(i) + ".b", layers[i].b, ParamKind::Weight);
    }
  }
};

// Per-channel batch normalization state. Scale/shift are learnable; running
// statistics are buffers kept for eval mode.
template <typename T>
struct BnState {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  static BnState make(std::size_t d) {
    BnState s;
    s.gamma = Tensor<T>::zeros({d});
    s.beta = Tensor<T>::zeros({d});
    s.running_mean = Tensor<T>::zeros({d});
    s.running_var = Tensor<T>::zeros({d});
    s.reset();
    return s;
  }

  void reset() {
    for (auto& v : gamma.vec()) v = T(1);
    for (auto& v : beta.vec()) v = T(0);
    for (auto& v : running_mean.vec()) v = T(0);
    for (auto& v : running_var.vec()) v = T(1);
  }

  std::size_t dim() const { return gamma.size(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma, ParamKind::Weight);
    f(prefix + ".beta", beta, ParamKind::Weight);
    f(prefix + ".running_mean", running_mean, ParamKind::Buffer);
    f(prefix + ".running_var", running_var, ParamKind::Buffer);
  }
};

// Batch normalization over all rows (batch and points flattened), one
// statistic per channel. Train mode normalizes with batch statistics and
// updates the running ones (unbiased variance, PyTorch convention); eval mode
// normalizes with the running statistics.
template <typename T>
inline Tensor<T> batch_norm(const Tensor<T>& x, BnState<T>& state, Mode mode) {
  require(x.defined(), "batch_norm: undefined input");
  std::size_t n = x.rows(), d = x.cols();
  require(d == state.dim(), "batch_norm: channel mismatch");
  if (mode == Mode::Train) require(n >= 2, "batch_norm: train mode needs at least 2 rows");

  std::vector<T> mean(d, T(0)), inv_std(d, T(0));
  if (mode == Mode::Train) {
    std::vector<T> var(d, T(0));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mean[c] += x.vec()[r * d + c];
    for (std::size_t c = 0; c < d; ++c) mean[c] /= static_cast<T>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        T dv = x.vec()[r * d + c] - mean[c];
        var[c] += dv * dv;
      }
    for (std::size_t c = 0; c < d; ++c) var[c] /= static_cast<T>(n);
    for (std::size_t c = 0; c < d; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + state.eps);
    T m = state.momentum;
    T unbias = static_cast<T>(n) / static_cast<T>(n - 1);
    for (std::size_t c = 0; c < d; ++c) {
      state.running_mean.vec()[c] = (T(1) - m) * state.running_mean.vec()[c] + m * mean[c];
      state.running_var.vec()[c] = (T(1) - m) * state.running_var.vec()[c] + m * var[c] * unbias;
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] = state.running_mean.vec()[c];
      inv_std[c] = T(1) / std::sqrt(state.running_var.vec()[c] + state.eps);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(x.size());
  Tensor<T> out;
  out.shape = x.shape;
  out.store = std::make_shared<std::vector<T>>(x.size());
  const auto& g = state.gamma.vec();
  const auto& b = state.beta.vec();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      T xh = (x.vec()[r * d + c] - mean[c]) * inv_std[c];
      (*xhat)[r * d + c] = xh;
      out.vec()[r * d + c] = g[c] * xh + b[c];
    }

  Tape<T>* tape = detail::common_tape<T>({&x, &state.gamma, &state.beta});
  if (!tape) return detail::finish<T>(std::move(out), "batch_norm", nullptr, {}, nullptr);
  int xn = detail::node_of(x);
  int gn = detail::node_of(state.gamma);
  int bn = detail::node_of(state.beta);
  bool train = mode == Mode::Train;
  auto gamma_store = state.gamma.store;
  auto istd = std::make_shared<std::vector<T>>(std::move(inv_std));
  auto bw = [xn, gn, bn, xhat, istd, gamma_store, n, d, train](Tape<T>& tp, int self) {
    const auto& go = tp.out_grad(self);
    if (gn >= 0) {
      auto& gg = tp.grad_buf(gn);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gg[c] += go[r * d + c] * (*xhat)[r * d + c];
    }
    if (bn >= 0) {
      auto& gb = tp.grad_buf(bn);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gb[c] += go[r * d + c];
    }
    if (xn >= 0) {
      auto& gx = tp.grad_buf(xn);
      const auto& gam = *gamma_store;
      if (train) {
        std::vector<T> sum_go(d, T(0)), sum_gox(d, T(0));
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) {
            sum_go[c] += go[r * d + c];
            sum_gox[c] += go[r * d + c] * (*xhat)[r * d + c];
          }
        T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c)
            gx[r * d + c] += gam[c] * (*istd)[c] *
                             (go[r * d + c] - inv_n * sum_go[c] -
                              (*xhat)[r * d + c] * inv_n * sum_gox[c]);
      } else {
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c)
            gx[r * d + c] += gam[c] * (*istd)[c] * go[r * d + c];
      }
    }
  };
  return detail::finish<T>(std::move(out), "batch_norm", tape, {xn, gn, bn}, bw);
}

// ---- generic parameter traversal -------------------------------------------

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
  ParamKind kind;
};

// Replaces every trainable tensor in a parameter struct with a watched copy
// (shared storage, tape node attached). Buffers stay plain.
template <typename T, typename P>
inline void watch_params(Tape<T>& tape, P& params) {
  params.visit("", [&](const std::string&, Tensor<T>& t, ParamKind k) {
    if (k == ParamKind::Weight) t = tape.watch(t);
  });
}

template <typename T, typename P>
inline std::vector<NamedParam<T>> collect_params(P& params, bool include_buffers = false) {
  std::vector<NamedParam<T>> out;
  params.visit("", [&](const std::string& name, Tensor<T>& t, ParamKind k) {
    if (k == ParamKind::Weight || include_buffers) out.push_back({name, &t, k});
  });
  return out;
}

// Deep-copies all storage so the clone can be mutated independently.
template <typename T, typename P>
inline P clone_params(const P& params) {
  P copy = params;
  copy.visit("", [](const std::string&, Tensor<T>& t, ParamKind) { t = t.clone(); });
  return copy;
}

// Moves all weights to a generic point by adding uniform noise. Finite
// difference checks need this: zero-initialized biases put ReLU
// pre-activations of self-pairs exactly on the kink, where central
// differences do not estimate the subgradient.
template <typename T, typename P>
inline void jitter_params(P& params, RngStream stream, double eps = 0.02) {
  params.visit("", [&](const std::string& name, Tensor<T>& t, ParamKind k) {
    if (k != ParamKind::Weight) return;
    RngStream s = split(stream, name);
    for (auto& v : t.vec()) v += static_cast<T>(uniform_in(s, -eps, eps));
  });
}

// Adam with bias correction. Moment buffers are keyed by parameter order,
// which must stay fixed across steps.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  long step = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T>
inline void adam_step(const std::vector<Tensor<T>*>& params,
                      const std::vector<std::vector<T>>& grads, AdamState<T>& state, T lr) {
  require(params.size() == grads.size(), "adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), T(0));
      state.v[i].assign(params[i]->size(), T(0));
    }
  }
  require(state.m.size() == params.size(), "adam_step: state size mismatch");
  state.step += 1;
  T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->size() == grads[i].size() && state.m[i].size() == grads[i].size(),
            "adam_step: shape mismatch");
    auto& p = params[i]->vec();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g[j] * g[j];
      T mhat = m[j] / bc1;
      T vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace airnet

#endif
