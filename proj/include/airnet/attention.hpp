#ifndef AIRNET_ATTENTION_HPP
#define AIRNET_ATTENTION_HPP

#include <string>
#include <vector>

#include "airnet/geometry.hpp"
#include "airnet/nn.hpp"

namespace airnet {

// Vector cross attention parameters. Queries and keys are compared through
// vector-valued similarities gamma(F_q - F_k + delta(p_q - p_kv)); values are
// F_kv W_v + delta(p_q - p_kv). In feature-free mode (coordinate-only inputs)
// the linear maps are dropped and only the delta terms remain.
template <typename T>
struct VcaParams {
  Tensor<T> w_q, w_k, w_v;
  Mlp<T> delta;  // 3 -> d, two layers, one ReLU
  Mlp<T> gamma;  // d -> d, two layers, one ReLU
  bool feature_free = false;
  std::size_t dim = 0;

  static VcaParams make(std::size_t d_q, std::size_t d_kv, std::size_t d) {
    VcaParams p;
    p.dim = d;
    p.w_q = Tensor<T>::zeros({d_q, d});
    p.w_k = Tensor<T>::zeros({d_kv, d});
    p.w_v = Tensor<T>::zeros({d_kv, d});
    p.delta = Mlp<T>::two_layer(3, d, d);
    p.gamma = Mlp<T>::two_layer(d, d, d);
    return p;
  }

  static VcaParams make_feature_free(std::size_t d) {
    VcaParams p;
    p.dim = d;
    p.feature_free = true;
    p.delta = Mlp<T>::two_layer(3, d, d);
    p.gamma = Mlp<T>::two_layer(d, d, d);
    return p;
  }

  void init(RngStream stream) {
    if (!feature_free) {
      Tensor<T> none;
      init_linear(w_q, none, split(stream, "wq"));
      init_linear(w_k, none, split(stream, "wk"));
      init_linear(w_v, none, split(stream, "wv"));
    }
    delta.init(split(stream, "delta"));
    gamma.init(split(stream, "gamma"));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    if (!feature_free) {
      f(prefix + ".wq", w_q, ParamKind::Weight);
      f(prefix + ".wk", w_k, ParamKind::Weight);
      f(prefix + ".wv", w_v, ParamKind::Weight);
    }
    delta.visit(prefix + ".delta", f);
    gamma.visit(prefix + ".gamma", f);
  }
};

// Neighborhood structure for one batched attention op: for R queries with k
// key-value tokens each, kv_index[r*k+j] names the key-value row and rel holds
// the relative position p_q - p_kv (zero and masked for tokens that carry no
// spatial location).
template <typename T>
struct PairSet {
  std::size_t k = 0;
  std::vector<int> kv_index;
  Tensor<T> rel;              // (R, k, 3) constant
  std::vector<T> delta_mask;  // empty = all ones

  std::size_t queries() const { return k == 0 ? 0 : kv_index.size() / k; }
};

template <typename T>
inline PairSet<T> build_pairs(const std::vector<Vec3>& q_pos, const std::vector<Vec3>& kv_pos,
                              const Neighborhood& nbh) {
  require(nbh.queries() == q_pos.size(), "build_pairs: neighborhood/query mismatch");
  PairSet<T> ps;
  ps.k = nbh.k;
  ps.kv_index = nbh.idx;
  std::vector<T> rel(nbh.idx.size() * 3);
  for (std::size_t q = 0; q < q_pos.size(); ++q)
    for (std::size_t j = 0; j < nbh.k; ++j) {
      int kv = nbh.idx[q * nbh.k + j];
      require(kv >= 0 && static_cast<std::size_t>(kv) < kv_pos.size(),
              "build_pairs: neighborhood index out of range");
      Vec3 d = q_pos[q] - kv_pos[static_cast<std::size_t>(kv)];
      rel[(q * nbh.k + j) * 3 + 0] = static_cast<T>(d.x);
      rel[(q * nbh.k + j) * 3 + 1] = static_cast<T>(d.y);
      rel[(q * nbh.k + j) * 3 + 2] = static_cast<T>(d.z);
    }
  ps.rel = Tensor<T>::from({q_pos.size(), nbh.k, 3}, std::move(rel));
  return ps;
}

// Core of Eq. 3-6 on a prebuilt pair set. x_q is R x d_q (undefined in
// feature-free mode); x_kv is K x d_kv. Returns R x d.
template <typename T>
inline Tensor<T> vca_core(const Tensor<T>& x_q, const Tensor<T>& x_kv, const PairSet<T>& pairs,
                          const VcaParams<T>& params) {
  std::size_t r = pairs.queries(), k = pairs.k, d = params.dim;
  require(k >= 1, "vca: empty neighborhood");

  Tensor<T> dlt = params.delta.forward(pairs.rel);  // (R, k, d)
  dlt = reshape(dlt, {r * k, d});
  if (!pairs.delta_mask.empty()) dlt = row_scale(dlt, pairs.delta_mask);

  Tensor<T> score_in, values;
  if (params.feature_free) {
    require(!x_q.defined() && !x_kv.defined(), "vca: feature-free mode takes no features");
    score_in = dlt;
    values = dlt;
  } else {
    require(x_q.defined() && x_kv.defined(), "vca: missing features");
    require(x_q.cols() == params.w_q.shape[0] && x_kv.cols() == params.w_k.shape[0],
            "vca: feature width mismatch");
    require(x_q.rows() == r, "vca: query count mismatch");
    Tensor<T> f_q = linear(x_q, params.w_q);
    Tensor<T> f_k = linear(x_kv, params.w_k);
    Tensor<T> f_v = linear(x_kv, params.w_v);
    std::vector<int> rep(r * k);
    for (std::size_t i = 0; i < r * k; ++i) rep[i] = static_cast<int>(i / k);
    Tensor<T> q_pairs = gather_rows(f_q, std::move(rep));
    Tensor<T> k_pairs = gather_rows(f_k, pairs.kv_index);
    score_in = add(sub(q_pairs, k_pairs), dlt);
    values = add(gather_rows(f_v, pairs.kv_index), dlt);
  }

  Tensor<T> scores = params.gamma.forward(score_in);
  Tensor<T> weights = channel_softmax(reshape(scores, {r, k, d}));
  Tensor<T> weighted = hadamard(reshape(weights, {r * k, d}), values);
  return segment_sum(weighted, k);
}

// Public signature of Eq. 3: query cloud (positions + features) against a
// key-value cloud over explicit neighborhoods.
template <typename T>
inline Tensor<T> vca(const std::vector<Vec3>& p_q, const Tensor<T>& x_q,
                     const std::vector<Vec3>& p_kv, const Tensor<T>& x_kv,
                     const Neighborhood& nbh, const VcaParams<T>& params) {
  PairSet<T> pairs = build_pairs<T>(p_q, p_kv, nbh);
  return vca_core(x_q, x_kv, pairs, params);
}

// VSA(X) := VCA(X, X) over kNN neighborhoods (self included).
template <typename T>
inline Tensor<T> vsa(const std::vector<Vec3>& p, const Tensor<T>& x, std::size_t k,
                     const VcaParams<T>& params) {
  require(k <= p.size(), "vsa: k exceeds point count");
  Neighborhood nbh = knn(p, p, k);
  return vca(p, x, p, x, nbh, params);
}

template <typename T>
struct PtbParams {
  VcaParams<T> vca;
  BnState<T> bn;

  static PtbParams make(std::size_t d, bool feature_free = false) {
    PtbParams p;
    p.vca = feature_free ? VcaParams<T>::make_feature_free(d) : VcaParams<T>::make(d, d, d);
    p.bn = BnState<T>::make(d);
    return p;
  }

  void init(RngStream stream) {
    vca.init(split(stream, "vca"));
    bn.reset();
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    vca.visit(prefix + ".vca", f);
    bn.visit(prefix + ".bn", f);
  }
};

// PTB over a prebuilt pair set (queries == key-values assumed).
template <typename T>
inline Tensor<T> ptb_core(const Tensor<T>& x, const PairSet<T>& pairs, PtbParams<T>& params,
                          Mode mode) {
  Tensor<T> attended = vca_core(x, x, pairs, params.vca);
  if (params.vca.feature_free) return batch_norm(attended, params.bn, mode);
  return batch_norm(add(x, attended), params.bn, mode);
}

// PTB(X) := BN(X + VSA(X)); positions pass through unchanged. In feature-free
// mode there is no input feature to add, so the block reduces to BN(VSA()).
template <typename T>
inline Tensor<T> ptb(const std::vector<Vec3>& p, const Tensor<T>& x, std::size_t k,
                     PtbParams<T>& params, Mode mode) {
  require(k <= p.size(), "ptb: k exceeds point count");
  PairSet<T> pairs = build_pairs<T>(p, p, knn(p, p, k));
  return ptb_core(x, pairs, params, mode);
}

}  // namespace airnet

#endif
