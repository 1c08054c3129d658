#ifndef AIRNET_TRAINING_HPP
#define AIRNET_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "airnet/model.hpp"
#include "airnet/synthdata.hpp"

namespace airnet {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t points_per_shape = 1000;  // J, resampled without replacement each step
  double lr = 5e-4;
  double lr_decay = 0.2;
  std::size_t lr_decay_every = 200;  // epochs
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t patience = 100;  // early stopping, epochs without val improvement
  std::size_t val_points = 512;

  void check() const {
    require(batch_size >= 1 && points_per_shape >= 1 && eval_every >= 1,
            "TrainConfig: zero-sized field");
    require(lr > 0 && lr_decay > 0 && lr_decay_every >= 1, "TrainConfig: bad schedule");
  }

  double lr_at_epoch(std::size_t epoch) const {
    return lr * std::pow(lr_decay, static_cast<double>(epoch / lr_decay_every));
  }
};

// Mean binary cross-entropy over probabilities, clamped at 1e-7 for
// stability. The training path computes the same quantity directly from
// logits (bce_with_logits_mean), which stays finite for all parameters.
inline double bce_loss(const std::vector<double>& o_hat, const std::vector<std::uint8_t>& o) {
  require(o_hat.size() == o.size() && !o.empty(), "bce_loss: size mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    require(o[i] == 0 || o[i] == 1, "bce_loss: labels must be 0/1");
    double p = std::clamp(o_hat[i], 1e-7, 1.0 - 1e-7);
    acc += o[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / static_cast<double>(o.size());
}

// A dataset item with its cached geometry plan (FPS/kNN never change for a
// fixed input cloud, so plans are computed once).
struct TrainItem {
  const DatasetItem* data = nullptr;
  EncodePlan plan;
};

inline std::vector<TrainItem> prepare_items(const std::vector<DatasetItem>& items,
                                            const EncoderConfig& cfg) {
  std::vector<TrainItem> out(items.size());
  parallel_for(items.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      out[i].data = &items[i];
      out[i].plan = make_encode_plan(items[i].input.points, cfg);
    }
  }, 1);
  return out;
}

// Mini-batch objective: encode every shape, decode J supervision points each,
// mean BCE over all (shape, point) pairs.
template <typename T>
inline Tensor<T> batch_loss(AirNet<T>& model, const std::vector<const TrainItem*>& batch,
                            const std::vector<std::vector<int>>& query_sel, Mode mode) {
  require(!batch.empty(), "batch_loss: empty batch");
  std::size_t j = query_sel[0].size();
  std::vector<const EncodePlan*> plans(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) plans[s] = &batch[s]->plan;
  BatchEncoding<T> enc = encode_batch<T>(plans, model.enc, model.enc_cfg, mode);

  std::vector<Vec3> queries;
  std::vector<T> labels;
  queries.reserve(batch.size() * j);
  labels.reserve(batch.size() * j);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    require(query_sel[s].size() == j, "batch_loss: ragged query selection");
    const auto& sup = batch[s]->data->supervision;
    for (int qi : query_sel[s]) {
      queries.push_back(sup.q[static_cast<std::size_t>(qi)]);
      labels.push_back(static_cast<T>(sup.occ[static_cast<std::size_t>(qi)]));
    }
  }
  Tensor<T> logits = decode_batch_logits<T>(queries, j, enc, model.dec, model.dec_cfg);
  return bce_with_logits_mean(reshape(logits, {queries.size()}), std::move(labels));
}

// Draws J supervision indices per shape, uniformly without replacement.
inline std::vector<std::vector<int>> draw_queries(const std::vector<const TrainItem*>& batch,
                                                  std::size_t j, RngStream stream) {
  std::vector<std::vector<int>> sel(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    std::size_t avail = batch[s]->data->supervision.size();
    require(j <= avail, "train: J exceeds available supervision points");
    RngStream item_stream = split(stream, s);
    sel[s] = sample_without_replacement(item_stream, static_cast<int>(avail),
                                        static_cast<int>(j));
  }
  return sel;
}

// One optimization step: forward, backward, Adam. Returns the batch loss.
template <typename T>
inline double train_step(AirNet<T>& model, AdamState<T>& opt,
                         const std::vector<const TrainItem*>& batch, std::size_t j, double lr,
                         RngStream step_stream) {
  auto sel = draw_queries(batch, j, step_stream);

  Tape<T> tape;
  AirNet<T> watched = model;
  watch_params(tape, watched);
  Tensor<T> loss = batch_loss(watched, batch, sel, Mode::Train);
  double loss_value = static_cast<double>(loss.vec()[0]);
  if (!std::isfinite(loss_value))
    throw NumericError("train_step: non-finite loss (" + std::to_string(loss_value) +
                       "); aborting");
  tape.backward(loss);

  auto watched_named = collect_params<T>(watched);
  auto live_named = collect_params<T>(model);
  std::vector<std::vector<T>> grads(watched_named.size());
  std::vector<Tensor<T>*> params(live_named.size());
  for (std::size_t i = 0; i < watched_named.size(); ++i) {
    grads[i] = tape.grad(*watched_named[i].tensor);
    params[i] = live_named[i].tensor;
  }
  adam_step(params, grads, opt, static_cast<T>(lr));
  return loss_value;
}

// Loss on held-out shapes with frozen statistics (eval-mode BatchNorm).
template <typename T>
inline double validation_loss(AirNet<T>& model, const std::vector<const TrainItem*>& items,
                              const std::vector<std::vector<int>>& sel, std::size_t batch_size) {
  double acc = 0;
  std::size_t done = 0;
  for (std::size_t at = 0; at < items.size(); at += batch_size) {
    std::size_t len = std::min(batch_size, items.size() - at);
    std::vector<const TrainItem*> batch(items.begin() + static_cast<std::ptrdiff_t>(at),
                                        items.begin() + static_cast<std::ptrdiff_t>(at + len));
    std::vector<std::vector<int>> bsel(sel.begin() + static_cast<std::ptrdiff_t>(at),
                                       sel.begin() + static_cast<std::ptrdiff_t>(at + len));
    Tensor<T> loss = batch_loss(model, batch, bsel, Mode::Eval);
    acc += static_cast<double>(loss.vec()[0]) * static_cast<double>(len);
    done += len;
  }
  return acc / static_cast<double>(done);
}

struct EpochRecord {
  std::size_t epoch;
  double train_loss;
  double val_loss;
  double lr;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
};

inline void write_metrics_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_metrics_log: cannot open " + path);
  out << "# epoch train_loss val_loss lr\n";
  for (const auto& r : log)
    out << r.epoch << ' ' << detail::fmt_double(r.train_loss) << ' '
        << detail::fmt_double(r.val_loss) << ' ' << detail::fmt_double(r.lr) << '\n';
}

// Train/val split is a pure function of the shape index (no reshuffling
// between runs): index i validates iff mix64(i) % 10 == 0.
inline bool is_validation_index(std::size_t i) {
  return airnet::detail::mix64(static_cast<std::uint64_t>(i) + 0x5eedULL) % 10 == 0;
}

// Epoch loop with LR schedule, per-epoch metrics, best-validation checkpoint
// and early stopping. The model ends at the best-validation parameters.
template <typename T>
inline FitResult fit(AirNet<T>& model, const std::vector<TrainItem>& items,
                     const TrainConfig& cfg, const std::string& checkpoint_path = "") {
  cfg.check();
  require(!items.empty(), "fit: empty dataset");

  std::vector<const TrainItem*> train_items, val_items;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items.size() >= 10 && is_validation_index(i))
      val_items.push_back(&items[i]);
    else
      train_items.push_back(&items[i]);
  }
  if (train_items.empty()) train_items.swap(val_items);

  RngStream root(cfg.seed, fnv1a64("airnet-fit"));
  // validation uses one fixed query subset per shape
  std::vector<std::vector<int>> val_sel;
  if (!val_items.empty())
    val_sel = draw_queries(val_items, std::min(cfg.val_points,
                                               val_items[0]->data->supervision.size()),
                           split(root, "val"));

  AdamState<T> opt;
  FitResult result;
  AirNet<T> best = model.clone();
  std::size_t since_best = 0;

  std::vector<int> order(static_cast<int>(train_items.size()));
  for (int i = 0; i < static_cast<int>(order.size()); ++i) order[static_cast<std::size_t>(i)] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr_at_epoch(epoch);
    RngStream epoch_stream = split(split(root, "epoch"), epoch);
    shuffle(epoch_stream, order);

    double train_acc = 0;
    std::size_t seen = 0, step = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size, ++step) {
      std::size_t len = std::min(cfg.batch_size, order.size() - at);
      std::vector<const TrainItem*> batch(len);
      for (std::size_t i = 0; i < len; ++i)
        batch[i] = train_items[static_cast<std::size_t>(order[at + i])];
      std::size_t j = std::min(cfg.points_per_shape, batch[0]->data->supervision.size());
      double loss =
          train_step(model, opt, batch, j, lr, split(split(epoch_stream, "step"), step));
      train_acc += loss * static_cast<double>(len);
      seen += len;
    }
    double train_loss = train_acc / static_cast<double>(seen);

    double val_loss = train_loss;
    if (!val_items.empty() && (epoch % cfg.eval_every == 0 || epoch + 1 == cfg.epochs))
      val_loss = validation_loss(model, val_items, val_sel, cfg.batch_size);
    else if (!val_items.empty() && !result.log.empty())
      val_loss = result.log.back().val_loss;

    result.log.push_back({epoch, train_loss, val_loss, lr});

    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      best = model.clone();
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }

  if (cfg.epochs > 0) {
    // hand back the best-validation parameters
    auto best_named = collect_params<T>(best, true);
    auto live_named = collect_params<T>(model, true);
    for (std::size_t i = 0; i < best_named.size(); ++i)
      live_named[i].tensor->vec() = best_named[i].tensor->vec();
    if (!checkpoint_path.empty()) {
      std::map<std::string, std::string> meta;
      meta["train.seed"] = std::to_string(cfg.seed);
      meta["train.best_epoch"] = std::to_string(result.best_epoch);
      meta["train.best_val"] = detail::fmt_double(result.best_val);
      save_model(checkpoint_path, model, meta);
    }
  }
  return result;
}

// ---- full-model gradient check ----------------------------------------------

struct GradcheckGroup {
  std::string name;
  double max_rel_err;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double worst = 0;
  bool pass = false;
  double tolerance = 1e-4;
};

// Relative error with an absolute floor: tiny gradients (below the floor)
// are compared absolutely, which is what central differences can resolve.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Checks every parameter of the full BCE objective against f64 central
// finite differences (h=1e-5). corrupt_group, when set, perturbs the analytic
// gradients of matching parameter groups to prove the check can fail.
inline GradcheckReport gradcheck_model(AirNet<double>& model,
                                       const std::vector<const TrainItem*>& batch,
                                       std::size_t j, RngStream sel_stream,
                                       double tolerance = 1e-4, double h = 1e-5,
                                       const std::string& corrupt_group = "") {
  auto sel = draw_queries(batch, j, sel_stream);

  Tape<double> tape;
  AirNet<double> watched = model;
  watch_params(tape, watched);
  Tensor<double> loss = batch_loss(watched, batch, sel, Mode::Train);
  tape.backward(loss);

  auto eval_loss = [&]() {
    return batch_loss(model, batch, sel, Mode::Train).vec()[0];
  };

  auto watched_named = collect_params<double>(watched);
  auto live_named = collect_params<double>(model);

  GradcheckReport report;
  report.tolerance = tolerance;
  for (std::size_t g = 0; g < watched_named.size(); ++g) {
    std::vector<double> analytic = tape.grad(*watched_named[g].tensor);
    if (!corrupt_group.empty() && watched_named[g].name.find(corrupt_group) != std::string::npos)
      for (auto& v : analytic) v += 1e-2;
    Tensor<double>* live = live_named[g].tensor;
    double worst = 0;
    for (std::size_t i = 0; i < live->size(); ++i) {
      double keep = live->vec()[i];
      live->vec()[i] = keep + h;
      double fp = eval_loss();
      live->vec()[i] = keep - h;
      double fm = eval_loss();
      live->vec()[i] = keep;
      worst = std::max(worst, rel_err(analytic[i], (fp - fm) / (2 * h)));
    }
    report.groups.push_back({watched_named[g].name, worst});
    report.worst = std::max(report.worst, worst);
  }
  report.pass = report.worst <= tolerance;
  return report;
}

}  // namespace airnet

#endif
