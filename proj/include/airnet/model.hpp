#ifndef AIRNET_MODEL_HPP
#define AIRNET_MODEL_HPP

#include <map>
#include <string>

#include "airnet/checkpoint.hpp"
#include "airnet/decoder.hpp"
#include "airnet/encoder.hpp"

namespace airnet {

// The full network: encoder and decoder parameters plus their configurations.
template <typename T>
struct AirNet {
  EncoderConfig enc_cfg;
  DecoderConfig dec_cfg;
  EncoderParams<T> enc;
  DecoderParams<T> dec;

  static AirNet make(const EncoderConfig& ec, const DecoderConfig& dc) {
    AirNet m;
    m.enc_cfg = ec;
    m.dec_cfg = dc;
    m.enc = EncoderParams<T>::make(ec);
    m.dec = DecoderParams<T>::make(ec.d, dc);
    return m;
  }

  void init(std::uint64_t seed) {
    RngStream root(seed, fnv1a64("airnet-init"));
    enc.init(split(root, "encoder"));
    dec.init(split(root, "decoder"));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    enc.visit(prefix + "encoder", f);
    dec.visit(prefix + "decoder", f);
  }

  AirNet clone() const { return clone_params<T>(*this); }

  std::map<std::string, std::string> config_meta() const {
    std::map<std::string, std::string> m;
    m["model.d"] = std::to_string(enc_cfg.d);
    m["model.anchors"] = std::to_string(enc_cfg.anchors);
    m["model.l1"] = std::to_string(enc_cfg.l1);
    m["model.l2"] = std::to_string(enc_cfg.l2);
    std::string cards;
    for (std::size_t i = 0; i < enc_cfg.cardinalities.size(); ++i)
      cards += (i ? "," : "") + std::to_string(enc_cfg.cardinalities[i]);
    m["model.cards"] = cards;
    m["model.k_enc"] = std::to_string(enc_cfg.k_enc);
    m["model.set_abs"] = enc_cfg.set_abs_mode == SetAbsMode::Attentive ? "attentive" : "maxpool";
    m["model.k_dec"] = std::to_string(dec_cfg.k_dec);
    m["model.d_dec"] = std::to_string(dec_cfg.d_dec);
    m["model.head_hidden"] = std::to_string(dec_cfg.head_hidden);
    m["model.head_blocks"] = std::to_string(dec_cfg.head_blocks);
    m["model.tau_occ"] = std::to_string(dec_cfg.tau_occ);
    m["model.decoder"] = dec_cfg.variant == DecoderVariant::Attentive ? "attentive" : "interp";
    return m;
  }
};

namespace detail {

inline std::size_t meta_size_t(const std::map<std::string, std::string>& m,
                               const std::string& key) {
  auto it = m.find(key);
  require(it != m.end(), "checkpoint: missing meta key " + key);
  return static_cast<std::size_t>(std::stoull(it->second));
}

inline std::string meta_str(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  require(it != m.end(), "checkpoint: missing meta key " + key);
  return it->second;
}

}  // namespace detail

template <typename T>
inline void save_model(const std::string& path, AirNet<T>& model,
                       std::map<std::string, std::string> extra_meta = {}) {
  auto meta = model.config_meta();
  for (auto& [k, v] : extra_meta) meta[k] = v;
  save_checkpoint<T>(path, model, meta);
}

template <typename T>
inline AirNet<T> load_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  EncoderConfig ec;
  ec.d = detail::meta_size_t(ck.meta, "model.d");
  ec.anchors = detail::meta_size_t(ck.meta, "model.anchors");
  ec.l1 = detail::meta_size_t(ck.meta, "model.l1");
  ec.l2 = detail::meta_size_t(ck.meta, "model.l2");
  ec.k_enc = detail::meta_size_t(ck.meta, "model.k_enc");
  ec.set_abs_mode = detail::meta_str(ck.meta, "model.set_abs") == "maxpool"
                        ? SetAbsMode::Maxpool
                        : SetAbsMode::Attentive;
  std::string cards = detail::meta_str(ck.meta, "model.cards");
  for (std::size_t at = 0; at < cards.size();) {
    std::size_t comma = cards.find(',', at);
    if (comma == std::string::npos) comma = cards.size();
    ec.cardinalities.push_back(static_cast<std::size_t>(std::stoull(cards.substr(at, comma - at))));
    at = comma + 1;
  }
  DecoderConfig dc;
  dc.k_dec = detail::meta_size_t(ck.meta, "model.k_dec");
  dc.d_dec = detail::meta_size_t(ck.meta, "model.d_dec");
  dc.head_hidden = detail::meta_size_t(ck.meta, "model.head_hidden");
  dc.head_blocks = detail::meta_size_t(ck.meta, "model.head_blocks");
  dc.tau_occ = std::stod(detail::meta_str(ck.meta, "model.tau_occ"));
  dc.variant = detail::meta_str(ck.meta, "model.decoder") == "interp" ? DecoderVariant::Interp
                                                                      : DecoderVariant::Attentive;
  AirNet<T> model = AirNet<T>::make(ec, dc);
  apply_checkpoint<T>(ck, model);
  return model;
}

}  // namespace airnet

#endif
