#ifndef AIRNET_DECODER_HPP
#define AIRNET_DECODER_HPP

#include <string>
#include <vector>

#include "airnet/encoder.hpp"

namespace airnet {

enum class DecoderVariant { Attentive, Interp };

struct DecoderConfig {
  std::size_t k_dec = 7;
  std::size_t d_dec = 200;       // attention width of the decoder VCA
  std::size_t head_hidden = 128; // occupancy head width
  std::size_t head_blocks = 5;   // residual blocks in the head
  double tau_occ = 0.5;
  DecoderVariant variant = DecoderVariant::Attentive;

  void check() const {
    require(k_dec >= 1 && d_dec >= 1 && head_hidden >= 1 && head_blocks >= 1,
            "DecoderConfig: zero width");
    require(tau_occ > 0.0 && tau_occ < 1.0, "DecoderConfig: tau_occ must lie in (0,1)");
  }
};

// Occupancy head: input projection, fully-connected residual blocks, then a
// single logit.
template <typename T>
struct OccHead {
  Tensor<T> w_in, b_in;
  struct Block {
    Tensor<T> w1, b1, w2, b2;
  };
  std::vector<Block> blocks;
  Tensor<T> w_out, b_out;

  static OccHead make(std::size_t d_in, std::size_t width, std::size_t n_blocks) {
    OccHead h;
    h.w_in = Tensor<T>::zeros({d_in, width});
    h.b_in = Tensor<T>::zeros({width});
    for (std::size_t i = 0; i < n_blocks; ++i) {
      Block b;
      b.w1 = Tensor<T>::zeros({width, width});
      b.b1 = Tensor<T>::zeros({width});
      b.w2 = Tensor<T>::zeros({width, width});
      b.b2 = Tensor<T>::zeros({width});
      h.blocks.push_back(std::move(b));
    }
    h.w_out = Tensor<T>::zeros({width, 1});
    h.b_out = Tensor<T>::zeros({1});
    return h;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = linear(x, w_in, b_in);
    for (const Block& blk : blocks) {
      Tensor<T> t = linear(relu(h), blk.w1, blk.b1);
      t = linear(relu(t), blk.w2, blk.b2);
      h = add(h, t);
    }
    return linear(relu(h), w_out, b_out);
  }

  void init(RngStream stream) {
    init_linear(w_in, b_in, split(stream, "in"));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      init_linear(blocks[i].w1, blocks[i].b1, split(split(stream, "blk1"), i));
      init_linear(blocks[i].w2, blocks[i].b2, split(split(stream, "blk2"), i));
    }
    init_linear(w_out, b_out, split(stream, "out"));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".in.w", w_in, ParamKind::Weight);
    f(prefix + ".in.b", b_in, ParamKind::Weight);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      std::string bp = prefix + ".blk" + std::to_string(i);
      f(bp + ".w1", blocks[i].w1, ParamKind::Weight);
      f(bp + ".b1", blocks[i].b1, ParamKind::Weight);
      f(bp + ".w2", blocks[i].w2, ParamKind::Weight);
      f(bp + ".b2", blocks[i].b2, ParamKind::Weight);
    }
    f(prefix + ".out.w", w_out, ParamKind::Weight);
    f(prefix + ".out.b", b_out, ParamKind::Weight);
  }
};

template <typename T>
struct DecoderParams {
  DecoderVariant variant = DecoderVariant::Attentive;
  VcaParams<T> vca;  // attentive only
  OccHead<T> head;

  static DecoderParams make(std::size_t enc_d, const DecoderConfig& cfg) {
    cfg.check();
    DecoderParams p;
    p.variant = cfg.variant;
    if (cfg.variant == DecoderVariant::Attentive) {
      p.vca = VcaParams<T>::make(enc_d, enc_d, cfg.d_dec);
      p.head = OccHead<T>::make(cfg.d_dec, cfg.head_hidden, cfg.head_blocks);
    } else {
      // interpolated locals concatenated with the global latent
      p.head = OccHead<T>::make(2 * enc_d, cfg.head_hidden, cfg.head_blocks);
    }
    return p;
  }

  void init(RngStream stream) {
    if (variant == DecoderVariant::Attentive) vca.init(split(stream, "vca"));
    head.init(split(stream, "head"));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    if (variant == DecoderVariant::Attentive) vca.visit(prefix + ".vca", f);
    head.visit(prefix + ".head", f);
  }
};

// Occupancy logits for a flat query list against a batch encoding. Queries
// are grouped per shape: queries_per_shape consecutive entries belong to one
// shape. The query token carries z_glob as its features; key-values are the
// k_dec nearest anchors plus one extra global token that has no spatial
// location (its delta terms are masked out).
template <typename T>
inline Tensor<T> decode_batch_logits(const std::vector<Vec3>& queries,
                                     std::size_t queries_per_shape,
                                     const BatchEncoding<T>& enc,
                                     const DecoderParams<T>& params,
                                     const DecoderConfig& cfg) {
  std::size_t b = enc.batch, m = enc.anchors_per_shape;
  require(queries.size() == b * queries_per_shape, "decode: query count mismatch");
  require(queries_per_shape >= 1, "decode: empty query set");
  std::size_t q_total = queries.size();
  std::size_t k = std::min<std::size_t>(cfg.k_dec, m);

  std::vector<int> shape_of(q_total);
  for (std::size_t q = 0; q < q_total; ++q)
    shape_of[q] = static_cast<int>(q / queries_per_shape);

  if (params.variant == DecoderVariant::Interp) {
    // inverse-distance interpolation of the k nearest locals
    std::vector<int> idx(q_total * k);
    std::vector<T> weights(q_total * k);
    std::vector<std::pair<double, int>> cand(m);
    for (std::size_t q = 0; q < q_total; ++q) {
      std::size_t s = static_cast<std::size_t>(shape_of[q]);
      for (std::size_t j = 0; j < m; ++j)
        cand[j] = {(enc.anchor_pos[s * m + j] - queries[q]).norm2(), static_cast<int>(j)};
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
      double total = 0;
      for (std::size_t j = 0; j < k; ++j) total += 1.0 / (std::sqrt(cand[j].first) + 1e-9);
      for (std::size_t j = 0; j < k; ++j) {
        idx[q * k + j] = static_cast<int>(s * m) + cand[j].second;
        weights[q * k + j] =
            static_cast<T>(1.0 / (std::sqrt(cand[j].first) + 1e-9) / total);
      }
    }
    Tensor<T> picked = gather_rows(enc.locals, std::move(idx));
    Tensor<T> interp = segment_sum(row_scale(picked, std::move(weights)), k);
    Tensor<T> glob = gather_rows(enc.z_glob, shape_of);
    return params.head.forward(concat_cols(interp, glob));
  }

  // attentive decoder: k nearest anchors plus the global token
  std::size_t tokens = k + 1;
  PairSet<T> pairs;
  pairs.k = tokens;
  pairs.kv_index.resize(q_total * tokens);
  pairs.delta_mask.assign(q_total * tokens, T(1));
  std::vector<T> rel(q_total * tokens * 3, T(0));
  std::vector<std::pair<double, int>> cand(m);
  for (std::size_t q = 0; q < q_total; ++q) {
    std::size_t s = static_cast<std::size_t>(shape_of[q]);
    for (std::size_t j = 0; j < m; ++j)
      cand[j] = {(enc.anchor_pos[s * m + j] - queries[q]).norm2(), static_cast<int>(j)};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t at = q * tokens + j;
      pairs.kv_index[at] = static_cast<int>(s * m) + cand[j].second;
      Vec3 d = queries[q] - enc.anchor_pos[s * m + static_cast<std::size_t>(cand[j].second)];
      rel[at * 3 + 0] = static_cast<T>(d.x);
      rel[at * 3 + 1] = static_cast<T>(d.y);
      rel[at * 3 + 2] = static_cast<T>(d.z);
    }
    // global token: keyed by the shape's z_glob row, no spatial location
    std::size_t at = q * tokens + k;
    pairs.kv_index[at] = static_cast<int>(b * m + s);
    pairs.delta_mask[at] = T(0);
  }
  pairs.rel = Tensor<T>::from({q_total, tokens, 3}, std::move(rel));

  Tensor<T> kv = concat_rows(enc.locals, enc.z_glob);
  Tensor<T> q_feat = gather_rows(enc.z_glob, shape_of);
  Tensor<T> z_loc = vca_core(q_feat, kv, pairs, params.vca);
  return params.head.forward(z_loc);
}

namespace detail {

inline double clamp_prob(double p) {
  const double tiny = 1e-12;
  return p < tiny ? tiny : (p > 1.0 - tiny ? 1.0 - tiny : p);
}

}  // namespace detail

// Occupancy probabilities for a batch of queries against one encoding.
// Elementwise identical to looped decode; chunks are farmed out to workers.
template <typename T>
inline std::vector<double> decode_batch(const std::vector<Vec3>& queries,
                                        const ShapeEncoding<T>& enc,
                                        const DecoderParams<T>& params,
                                        const DecoderConfig& cfg) {
  std::size_t n = queries.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  BatchEncoding<T> be;
  be.batch = 1;
  be.anchors_per_shape = enc.anchors.size();
  be.anchor_pos = enc.anchors;
  be.locals = enc.z;
  be.z_glob = reshape(enc.z_glob, {1, enc.z_glob.size()});
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    const std::size_t chunk = 4096;
    for (std::size_t at = lo; at < hi; at += chunk) {
      std::size_t len = std::min(chunk, hi - at);
      std::vector<Vec3> sub(queries.begin() + static_cast<std::ptrdiff_t>(at),
                            queries.begin() + static_cast<std::ptrdiff_t>(at + len));
      Tensor<T> logits = decode_batch_logits(sub, len, be, params, cfg);
      for (std::size_t i = 0; i < len; ++i) {
        double z = static_cast<double>(logits.vec()[i]);
        out[at + i] = detail::clamp_prob(1.0 / (1.0 + std::exp(-z)));
      }
    }
  }, 512);
  return out;
}

// Occupancy probability at a single query point, strictly inside (0,1).
template <typename T>
inline double decode(const Vec3& q, const ShapeEncoding<T>& enc,
                     const DecoderParams<T>& params, const DecoderConfig& cfg) {
  return decode_batch<T>({q}, enc, params, cfg)[0];
}

}  // namespace airnet

#endif
