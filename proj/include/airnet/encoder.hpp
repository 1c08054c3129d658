#ifndef AIRNET_ENCODER_HPP
#define AIRNET_ENCODER_HPP

#include <string>
#include <vector>

#include "airnet/attention.hpp"

namespace airnet {

enum class SetAbsMode { Attentive, Maxpool };

struct EncoderConfig {
  std::size_t d = 256;        // feature width
  std::size_t anchors = 100;  // M
  std::size_t l1 = 2;         // downsampling layers
  std::size_t l2 = 3;         // full-attention layers
  std::vector<std::size_t> cardinalities;  // n_1 .. n_L1, last must equal anchors
  std::size_t k_enc = 16;
  SetAbsMode set_abs_mode = SetAbsMode::Attentive;

  // Cardinalities default to a geometric ladder from n_input down to M.
  void fill_default_cardinalities(std::size_t n_input) {
    cardinalities.clear();
    double top = static_cast<double>(std::max(n_input, anchors));
    for (std::size_t i = 1; i <= l1; ++i) {
      double f = static_cast<double>(i) / static_cast<double>(l1);
      double v = top * std::pow(static_cast<double>(anchors) / top, f);
      cardinalities.push_back(static_cast<std::size_t>(std::llround(v)));
    }
    cardinalities.back() = anchors;
    for (std::size_t i = 1; i < cardinalities.size(); ++i)
      cardinalities[i] = std::min(cardinalities[i], cardinalities[i - 1]);
  }

  void check() const {
    require(d >= 1 && anchors >= 1 && k_enc >= 1, "EncoderConfig: zero width");
    require(cardinalities.size() == l1, "EncoderConfig: need one cardinality per layer");
    require(cardinalities.empty() || cardinalities.back() == anchors,
            "EncoderConfig: last cardinality must equal anchor count");
    for (std::size_t i = 1; i < cardinalities.size(); ++i)
      require(cardinalities[i] <= cardinalities[i - 1], "EncoderConfig: cardinalities must decrease");
  }
};

// FFN block after attention: two-layer MLP, residual skip, BatchNorm.
template <typename T>
struct FfnParams {
  Mlp<T> mlp;
  BnState<T> bn;

  static FfnParams make(std::size_t d) {
    FfnParams f;
    f.mlp = Mlp<T>::two_layer(d, d, d);
    f.bn = BnState<T>::make(d);
    return f;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    return batch_norm(add(x, mlp.forward(x)), bn, mode);
  }

  void init(RngStream stream) {
    mlp.init(split(stream, "mlp"));
    bn.reset();
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    mlp.visit(prefix + ".mlp", f);
    bn.visit(prefix + ".bn", f);
  }
};

// Set abstraction: FPS picks the central points, then either two rounds of
// cross attention (each followed by an FFN block) summarize the neighborhoods,
// or -- in the ablation mode -- a shared MLP over (feature, relative position)
// followed by a channel-wise max.
template <typename T>
struct SetAbsParams {
  SetAbsMode mode = SetAbsMode::Attentive;
  VcaParams<T> vca1, vca2;
  FfnParams<T> ffn1, ffn2;
  Mlp<T> pool_mlp;

  static SetAbsParams make(std::size_t d, SetAbsMode mode) {
    SetAbsParams p;
    p.mode = mode;
    if (mode == SetAbsMode::Attentive) {
      p.vca1 = VcaParams<T>::make(d, d, d);
      p.vca2 = VcaParams<T>::make(d, d, d);
      p.ffn1 = FfnParams<T>::make(d);
      p.ffn2 = FfnParams<T>::make(d);
    } else {
      p.pool_mlp = Mlp<T>::two_layer(d + 3, d, d);
    }
    return p;
  }

  void init(RngStream stream) {
    if (mode == SetAbsMode::Attentive) {
      vca1.init(split(stream, "vca1"));
      vca2.init(split(stream, "vca2"));
      ffn1.init(split(stream, "ffn1"));
      ffn2.init(split(stream, "ffn2"));
    } else {
      pool_mlp.init(split(stream, "pool"));
    }
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    if (mode == SetAbsMode::Attentive) {
      vca1.visit(prefix + ".vca1", f);
      ffn1.visit(prefix + ".ffn1", f);
      vca2.visit(prefix + ".vca2", f);
      ffn2.visit(prefix + ".ffn2", f);
    } else {
      pool_mlp.visit(prefix + ".pool", f);
    }
  }
};

template <typename T>
struct DsLayerParams {
  SetAbsParams<T> sa;
  PtbParams<T> ptb;
  FfnParams<T> ffn;

  static DsLayerParams make(std::size_t d, SetAbsMode mode) {
    DsLayerParams l;
    l.sa = SetAbsParams<T>::make(d, mode);
    l.ptb = PtbParams<T>::make(d);
    l.ffn = FfnParams<T>::make(d);
    return l;
  }

  void init(RngStream stream) {
    sa.init(split(stream, "sa"));
    ptb.init(split(stream, "ptb"));
    ffn.init(split(stream, "ffn"));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    sa.visit(prefix + ".sa", f);
    ptb.visit(prefix + ".ptb", f);
    ffn.visit(prefix + ".ffn", f);
  }
};

template <typename T>
struct FullLayerParams {
  PtbParams<T> ptb;
  FfnParams<T> ffn;

  static FullLayerParams make(std::size_t d) {
    FullLayerParams l;
    l.ptb = PtbParams<T>::make(d);
    l.ffn = FfnParams<T>::make(d);
    return l;
  }

  void init(RngStream stream) {
    ptb.init(split(stream, "ptb"));
    ffn.init(split(stream, "ffn"));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    ptb.visit(prefix + ".ptb", f);
    ffn.visit(prefix + ".ffn", f);
  }
};

template <typename T>
struct EncoderParams {
  PtbParams<T> input_ptb;  // feature-free: coordinates are never features
  std::vector<DsLayerParams<T>> ds;
  std::vector<FullLayerParams<T>> full;
  Mlp<T> global_mlp;  // d -> d -> d after global maxpooling

  static EncoderParams make(const EncoderConfig& cfg) {
    cfg.check();
    EncoderParams p;
    p.input_ptb = PtbParams<T>::make(cfg.d, /*feature_free=*/true);
    for (std::size_t i = 0; i < cfg.l1; ++i)
      p.ds.push_back(DsLayerParams<T>::make(cfg.d, cfg.set_abs_mode));
    for (std::size_t i = 0; i < cfg.l2; ++i) p.full.push_back(FullLayerParams<T>::make(cfg.d));
    p.global_mlp = Mlp<T>::two_layer(cfg.d, cfg.d, cfg.d);
    return p;
  }

  void init(RngStream stream) {
    input_ptb.init(split(stream, "input_ptb"));
    for (std::size_t i = 0; i < ds.size(); ++i) ds[i].init(split(split(stream, "ds"), i));
    for (std::size_t i = 0; i < full.size(); ++i) full[i].init(split(split(stream, "full"), i));
    global_mlp.init(split(stream, "global"));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    input_ptb.visit(prefix + ".input_ptb", f);
    for (std::size_t i = 0; i < ds.size(); ++i)
      ds[i].visit(prefix + ".ds" + std::to_string(i), f);
    for (std::size_t i = 0; i < full.size(); ++i)
      full[i].visit(prefix + ".full" + std::to_string(i), f);
    global_mlp.visit(prefix + ".global", f);
  }
};

// The latent representation: M anchors with local latents plus one global
// latent vector.
template <typename T>
struct ShapeEncoding {
  std::vector<Vec3> anchors;  // M
  Tensor<T> z;                // M x d
  Tensor<T> z_glob;           // d
};

// Geometry-only part of an encoding pass. Positions never depend on the
// parameters, so plans can be computed once per shape and reused across
// training steps.
struct EncodePlan {
  std::size_t n_input = 0;
  std::vector<std::size_t> cards;            // effective (clamped) cardinalities
  std::vector<std::vector<Vec3>> stage_pos;  // [0] = input, then per DS layer
  Neighborhood input_nbh;
  struct DsPlan {
    std::vector<int> fps_idx;
    Neighborhood sa_nbh;   // centrals -> previous stage
    Neighborhood ptb_nbh;  // centrals -> centrals
  };
  std::vector<DsPlan> ds;

  const std::vector<Vec3>& anchor_positions() const { return stage_pos.back(); }
};

inline EncodePlan make_encode_plan(const std::vector<Vec3>& points, const EncoderConfig& cfg) {
  cfg.check();
  std::size_t n = points.size();
  require(n >= cfg.anchors, "encode: fewer input points than anchors");
  require(n >= cfg.k_enc, "encode: fewer input points than k_enc");

  EncodePlan plan;
  plan.n_input = n;
  plan.stage_pos.push_back(points);
  plan.input_nbh = knn(points, points, std::min(cfg.k_enc, n));

  std::size_t prev = n;
  for (std::size_t i = 0; i < cfg.l1; ++i) {
    // clamp for tiny inputs while keeping the ladder non-increasing
    std::size_t card = std::max(cfg.anchors, std::min(cfg.cardinalities[i], prev));
    if (i + 1 == cfg.l1) card = cfg.anchors;
    EncodePlan::DsPlan dsp;
    const auto& prev_pos = plan.stage_pos.back();
    dsp.fps_idx = fps(prev_pos, card);
    std::vector<Vec3> centrals(card);
    for (std::size_t j = 0; j < card; ++j)
      centrals[j] = prev_pos[static_cast<std::size_t>(dsp.fps_idx[j])];
    dsp.sa_nbh = knn(centrals, prev_pos, std::min(cfg.k_enc, prev));
    dsp.ptb_nbh = knn(centrals, centrals, std::min(cfg.k_enc, card));
    plan.cards.push_back(card);
    plan.stage_pos.push_back(std::move(centrals));
    plan.ds.push_back(std::move(dsp));
    prev = card;
  }
  return plan;
}

template <typename T>
struct BatchEncoding {
  std::size_t batch = 0;
  std::size_t anchors_per_shape = 0;
  std::vector<Vec3> anchor_pos;  // batch * M
  Tensor<T> locals;              // (batch * M) x d
  Tensor<T> z_glob;              // batch x d
};

namespace detail {

// Stacks per-shape neighborhoods into one global PairSet with row offsets.
template <typename T>
inline PairSet<T> stack_pairs(const std::vector<const std::vector<Vec3>*>& q_pos,
                              const std::vector<const std::vector<Vec3>*>& kv_pos,
                              const std::vector<const Neighborhood*>& nbhs) {
  std::size_t b = q_pos.size();
  std::size_t k = nbhs[0]->k;
  std::size_t rows = 0, kv_offset = 0;
  for (std::size_t i = 0; i < b; ++i) rows += q_pos[i]->size();

  PairSet<T> ps;
  ps.k = k;
  ps.kv_index.resize(rows * k);
  std::vector<T> rel(rows * k * 3);
  std::size_t q_row = 0;
  for (std::size_t s = 0; s < b; ++s) {
    const auto& qp = *q_pos[s];
    const auto& kp = *kv_pos[s];
    const auto& nb = *nbhs[s];
    require(nb.k == k && nb.queries() == qp.size(), "stack_pairs: inconsistent neighborhoods");
    for (std::size_t q = 0; q < qp.size(); ++q) {
      for (std::size_t j = 0; j < k; ++j) {
        int kv = nb.idx[q * k + j];
        std::size_t at = (q_row + q) * k + j;
        ps.kv_index[at] = static_cast<int>(kv_offset) + kv;
        Vec3 d = qp[q] - kp[static_cast<std::size_t>(kv)];
        rel[at * 3 + 0] = static_cast<T>(d.x);
        rel[at * 3 + 1] = static_cast<T>(d.y);
        rel[at * 3 + 2] = static_cast<T>(d.z);
      }
    }
    q_row += qp.size();
    kv_offset += kp.size();
  }
  ps.rel = Tensor<T>::from({rows, k, 3}, std::move(rel));
  return ps;
}

}  // namespace detail

// Set abstraction over a prebuilt pair set (queries = FPS centrals).
template <typename T>
inline Tensor<T> set_abs_core(const Tensor<T>& x_prev, const std::vector<int>& central_rows,
                              const PairSet<T>& pairs, SetAbsParams<T>& params, Mode mode) {
  if (params.mode == SetAbsMode::Attentive) {
    Tensor<T> q = gather_rows(x_prev, central_rows);
    Tensor<T> h = vca_core(q, x_prev, pairs, params.vca1);
    h = params.ffn1.forward(h, mode);
    Tensor<T> h2 = vca_core(h, x_prev, pairs, params.vca2);
    return params.ffn2.forward(h2, mode);
  }
  Tensor<T> nb = gather_rows(x_prev, pairs.kv_index);
  Tensor<T> with_rel = concat_cols(nb, reshape(pairs.rel, {pairs.kv_index.size(), 3}));
  return segment_max(params.pool_mlp.forward(with_rel), pairs.k);
}

// Public single-shape set abstraction: returns the selected positions and the
// abstracted features; output positions are a subset of the input positions.
template <typename T>
inline std::pair<std::vector<Vec3>, Tensor<T>> set_abs(const std::vector<Vec3>& p,
                                                       const Tensor<T>& x, std::size_t n_out,
                                                       std::size_t k, SetAbsParams<T>& params,
                                                       Mode mode) {
  require(n_out <= p.size(), "set_abs: n' exceeds point count");
  require(k <= p.size(), "set_abs: k exceeds point count");
  std::vector<int> central = fps(p, n_out);
  std::vector<Vec3> cpos(n_out);
  for (std::size_t i = 0; i < n_out; ++i) cpos[i] = p[static_cast<std::size_t>(central[i])];
  PairSet<T> pairs = build_pairs<T>(cpos, p, knn(cpos, p, k));
  return {cpos, set_abs_core(x, central, pairs, params, mode)};
}

// Full encoder over a batch of shapes with identical point counts. Shapes are
// stacked row-wise so every BatchNorm sees the whole batch.
template <typename T>
inline BatchEncoding<T> encode_batch(const std::vector<const EncodePlan*>& plans,
                                     EncoderParams<T>& params, const EncoderConfig& cfg,
                                     Mode mode) {
  std::size_t b = plans.size();
  require(b >= 1, "encode_batch: empty batch");
  for (const EncodePlan* pl : plans) {
    require(pl->n_input == plans[0]->n_input, "encode_batch: shapes must share N");
    require(pl->cards == plans[0]->cards, "encode_batch: shapes must share the stage ladder");
  }

  auto stage_positions = [&](std::size_t stage) {
    std::vector<const std::vector<Vec3>*> v(b);
    for (std::size_t s = 0; s < b; ++s) v[s] = &plans[s]->stage_pos[stage];
    return v;
  };

  // (i) initial feature-free PTB
  Tensor<T> x;
  {
    std::vector<const Neighborhood*> nbhs(b);
    for (std::size_t s = 0; s < b; ++s) nbhs[s] = &plans[s]->input_nbh;
    auto pos = stage_positions(0);
    PairSet<T> pairs = detail::stack_pairs<T>(pos, pos, nbhs);
    Tensor<T> none;
    x = ptb_core(none, pairs, params.input_ptb, mode);
  }

  // (ii) downsampling layers: SetAbs, then a PTB and FFN block
  for (std::size_t layer = 0; layer < cfg.l1; ++layer) {
    std::size_t prev_rows = plans[0]->stage_pos[layer].size();
    std::size_t card = plans[0]->cards[layer];

    std::vector<int> central_rows(b * card);
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t j = 0; j < card; ++j)
        central_rows[s * card + j] =
            static_cast<int>(s * prev_rows) + plans[s]->ds[layer].fps_idx[j];

    std::vector<const Neighborhood*> sa_nbhs(b), ptb_nbhs(b);
    for (std::size_t s = 0; s < b; ++s) {
      sa_nbhs[s] = &plans[s]->ds[layer].sa_nbh;
      ptb_nbhs[s] = &plans[s]->ds[layer].ptb_nbh;
    }
    auto prev_pos = stage_positions(layer);
    auto next_pos = stage_positions(layer + 1);
    PairSet<T> sa_pairs = detail::stack_pairs<T>(next_pos, prev_pos, sa_nbhs);
    x = set_abs_core(x, central_rows, sa_pairs, params.ds[layer].sa, mode);

    PairSet<T> ptb_pairs = detail::stack_pairs<T>(next_pos, next_pos, ptb_nbhs);
    x = ptb_core(x, ptb_pairs, params.ds[layer].ptb, mode);
    x = params.ds[layer].ffn.forward(x, mode);
  }

  // (iii) full-attention PTBs over all M anchors of each shape
  std::size_t m = cfg.anchors;
  if (cfg.l2 > 0) {
    Neighborhood full_nbh;
    full_nbh.k = m;
    full_nbh.idx.resize(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) full_nbh.idx[i * m + j] = static_cast<int>(j);
    std::vector<const Neighborhood*> nbhs(b, &full_nbh);
    auto pos = stage_positions(cfg.l1);
    PairSet<T> pairs = detail::stack_pairs<T>(pos, pos, nbhs);
    for (std::size_t layer = 0; layer < cfg.l2; ++layer) {
      x = ptb_core(x, pairs, params.full[layer].ptb, mode);
      x = params.full[layer].ffn.forward(x, mode);
    }
  }

  // (iv) global latent: per-shape maxpool over the M locals, then a 2-layer MLP
  Tensor<T> pooled = segment_max(x, m);
  Tensor<T> z_glob = params.global_mlp.forward(pooled);

  BatchEncoding<T> out;
  out.batch = b;
  out.anchors_per_shape = m;
  out.anchor_pos.reserve(b * m);
  for (std::size_t s = 0; s < b; ++s)
    for (const Vec3& p : plans[s]->anchor_positions()) out.anchor_pos.push_back(p);
  out.locals = std::move(x);
  out.z_glob = std::move(z_glob);
  return out;
}

// Public single-shape encoder: point cloud in, (anchors, locals, global) out.
template <typename T>
inline ShapeEncoding<T> encode(const PointCloud& cloud, EncoderParams<T>& params,
                               const EncoderConfig& cfg, Mode mode) {
  cloud.check();
  require(cloud.feat_dim == 0, "encode: input features beyond coordinates are not supported");
  EncodePlan plan = make_encode_plan(cloud.points, cfg);
  BatchEncoding<T> be = encode_batch<T>({&plan}, params, cfg, mode);
  ShapeEncoding<T> enc;
  enc.anchors = std::move(be.anchor_pos);
  enc.z = std::move(be.locals);
  enc.z_glob = reshape(be.z_glob, {cfg.d});
  return enc;
}

}  // namespace airnet

#endif
